#include <gtest/gtest.h>

#include <numeric>

#include "forge/projector.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace forge;

namespace {

ProjectionGeometry small_detector(int n = 16) {
  ProjectionGeometry g;
  g.detector_cols = n;
  g.detector_rows = n;
  return g;
}

Image2D render(const ScalarVolume& v, const RigidTransform& pose, const ProjectionGeometry& g, double step = 0) {
  const PlacedVolume pv{&v, pose};
  RaycastOptions o;
  o.step_mm = step;
  return raycast_line_integrals(std::span<const PlacedVolume>(&pv, 1), camera_from_orbit(g), g, o);
}

double center_value(const Image2D& img) {
  return img.at(img.cols / 2, img.rows / 2);
}

}  // namespace

TEST(Trilinear, ReproducesLinearField) {
  VolumeGrid g;
  g.dims = {4, 5, 6};
  ScalarVolume v(g, VolumeKind::kAttenuation, 0.0f);
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 4; ++i) v.at(i, j, k) = static_cast<float>(1 + 2 * i - j + 0.5 * k);
  for (const Vec3& p : {Vec3(0.3, 1.7, 2.2), Vec3(2.9, 3.99, 4.5), Vec3(0, 0, 0), Vec3(3, 4, 5)})
    EXPECT_NEAR(detail::trilinear(v, p), 1 + 2 * p.x() - p.y() + 0.5 * p.z(), 1e-5);
  EXPECT_NEAR(detail::trilinear(v, Vec3(-3, 1, 1)), detail::trilinear(v, Vec3(0, 1, 1)), 0.0);
  EXPECT_NEAR(detail::trilinear(v, Vec3(9, 1, 1)), detail::trilinear(v, Vec3(3, 1, 1)), 0.0);
}

TEST(ClipRay, HitsAndMisses) {
  double t0, t1;
  ASSERT_TRUE(detail::clip_ray(Vec3(-5, 0.5, 0.5), Vec3::UnitX(), Vec3::Zero(), Vec3::Ones(), t0, t1));
  EXPECT_DOUBLE_EQ(t0, 5.0);
  EXPECT_DOUBLE_EQ(t1, 6.0);
  EXPECT_FALSE(detail::clip_ray(Vec3(-5, 2, 0.5), Vec3::UnitX(), Vec3::Zero(), Vec3::Ones(), t0, t1));
  EXPECT_FALSE(detail::clip_ray(Vec3(5, 0.5, 0.5), Vec3::UnitX(), Vec3::Zero(), Vec3::Ones(), t0, t1));
  ASSERT_TRUE(detail::clip_ray(Vec3(0.5, 0.5, 0.5), Vec3::UnitZ(), Vec3::Zero(), Vec3::Ones(), t0, t1));
  EXPECT_DOUBLE_EQ(t0, 0.0);
  EXPECT_DOUBLE_EQ(t1, 0.5);
}

TEST(Raycast, UniformCubeCentralRay) {
  const ScalarVolume cube = fixture::uniform_cube(0.02, 100.0, 1.0, 2);
  const double p = center_value(render(cube, RigidTransform::identity(), small_detector()));
  EXPECT_NEAR(p, 2.0, 0.01 * 2.0);
}

TEST(Raycast, ObliqueSlabPathLength) {
  VolumeGrid g;
  g.dims = {300, 12, 300};
  g.spacing_mm = Vec3::Ones();
  g.origin_mm = Vec3(-149.5, -5.5, -149.5);
  ScalarVolume slab(g, VolumeKind::kAttenuation, 0.0f);
  for (int k = 0; k < 300; ++k)
    for (int j = 1; j < 11; ++j)
      for (int i = 0; i < 300; ++i) slab.at(i, j, k) = 0.05f;
  for (double deg : {0.0, 20.0, 40.0}) {
    const double p = center_value(render(slab, rigid_from_euler(0, 0, deg, Vec3::Zero()), small_detector(), 0.25));
    EXPECT_NEAR(p, 0.05 * oracle::slab_path(10.0, deg * kDeg2Rad), 0.005 * p) << deg;
  }
}

TEST(Raycast, StepHalvingChangesLittle) {
  const TriangleMesh sphere = make_icosphere(Vec3::Zero(), 20.0, 4);
  ScalarVolume v = occupancy_to_attenuation(voxelize_mesh(sphere, 1.0, 2.0), 0.02);
  const ProjectionGeometry g = small_detector(32);
  const Image2D a = render(v, RigidTransform::identity(), g, 0.5);
  const Image2D b = render(v, RigidTransform::identity(), g, 0.25);
  const double sa = std::accumulate(a.values.begin(), a.values.end(), 0.0);
  const double sb = std::accumulate(b.values.begin(), b.values.end(), 0.0);
  EXPECT_GT(sa, 0.0);
  EXPECT_LT(std::abs(sa - sb) / sb, 0.0025);
}

TEST(Raycast, VolumesAreAdditive) {
  const ScalarVolume a = fixture::uniform_cube(0.03, 20.0, 1.0, 1);
  const ScalarVolume b = fixture::uniform_cube(0.5, 6.0, 0.5, 1);
  const RigidTransform pa = rigid_from_euler(10, 0, 5, Vec3(3, 0, -2));
  const RigidTransform pb = rigid_from_euler(0, 30, 60, Vec3(-4, 10, 1));
  ProjectionGeometry g = small_detector(24);
  g.lao_rao_deg = 25;
  const std::array<PlacedVolume, 2> both{PlacedVolume{&a, pa}, PlacedVolume{&b, pb}};
  const Image2D sum = raycast_line_integrals(both, camera_from_orbit(g), g);
  const Image2D ia = render(a, pa, g);
  const Image2D ib = render(b, pb, g);
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(sum.values[i], ia.values[i] + ib.values[i], 1e-9);
}

TEST(Raycast, ThreadCountDoesNotChangeResult) {
  const ScalarVolume a = fixture::uniform_cube(0.03, 20.0, 1.0, 1);
  const ProjectionGeometry g = small_detector(20);
  const PlacedVolume pv{&a, rigid_from_euler(5, 10, 15, Vec3::Zero())};
  RaycastOptions one, four;
  four.threads = 4;
  const auto cam = camera_from_orbit(g);
  EXPECT_EQ(raycast_line_integrals(std::span(&pv, 1), cam, g, one).values,
            raycast_line_integrals(std::span(&pv, 1), cam, g, four).values);
}

TEST(Raycast, NullVolumeRejected) {
  const ProjectionGeometry g = small_detector();
  const PlacedVolume pv{};
  EXPECT_THROW(raycast_line_integrals(std::span(&pv, 1), camera_from_orbit(g), g), Error);
}

TEST(ProjectMask, EqualsSupportOfLineIntegrals) {
  OccupancyVolume occ = voxelize_mesh(make_icosphere(Vec3::Zero(), 4.0, 3), 0.5, 1.0);
  const ScalarVolume s = occupancy_as_scalar(occ);
  const RigidTransform pose = rigid_from_euler(0, 0, 0, Vec3(2, 0, 1));
  ProjectionGeometry g = small_detector(48);
  g.pixel_size_mm = 0.5;
  const Image2D mask = project_mask(s, pose, camera_from_orbit(g), g);
  const Image2D p = render(s, pose, g);
  EXPECT_EQ(mask.kind, ImageKind::kMask);
  int on = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    EXPECT_EQ(mask.values[i], p.values[i] > 0 ? 1.0 : 0.0);
    on += mask.values[i] > 0;
  }
  EXPECT_GT(on, 0);
  EXPECT_LT(on, static_cast<int>(mask.size()));
}

TEST(BeliefMap, PeakAndOneSigmaValues) {
  const Image2D b = belief_map({100, 80}, {}, 256, 200);
  EXPECT_DOUBLE_EQ(b.at(100, 80), 1.0);
  EXPECT_NEAR(b.at(105, 80), 0.6065306597, 1e-9);
  EXPECT_NEAR(b.at(100, 75), 0.6065306597, 1e-9);
  EXPECT_EQ(b.kind, ImageKind::kProbability);
}

TEST(BeliefMap, MassMatchesContinuousGaussian) {
  const Image2D b = belief_map({256.3, 255.7}, {}, 512, 512);
  const double sum = std::accumulate(b.values.begin(), b.values.end(), 0.0);
  EXPECT_NEAR(sum, oracle::gaussian_plane_integral(5.0), 0.01 * 157.08);
}

TEST(BeliefMap, ArgmaxIsRoundedLandmark) {
  const Image2D b = belief_map({40.3, 17.8}, {3.0, 2.0}, 64, 64);
  const auto it = std::max_element(b.values.begin(), b.values.end());
  const auto idx = static_cast<int>(it - b.values.begin());
  EXPECT_EQ(idx % 64, 40);
  EXPECT_EQ(idx / 64, 18);
  EXPECT_LE(*it, 2.0);
}

TEST(BeliefMap, NonPositiveSigmaRejected) {
  EXPECT_THROW(belief_map({1, 1}, {0.0, 1.0}, 8, 8), Error);
}

TEST(RenderLandmarks, ProjectsPosedEndpoints) {
  const CdmPosedModel m = forward_kinematics(CdmShape{{3, 3, 3, 3, 3}}, CdmGeometrySpec{});
  const ProjectionGeometry g;
  const CameraPose cam = camera_from_orbit(g);
  const RigidTransform pose = rigid_from_euler(5, 6, 7, Vec3(-1, 2, -13));
  const auto lm = render_landmarks(m, pose, cam, g);
  const PixelCoord d = project_point(cam, g, pose.apply(m.centerline[kNotchCount]));
  const PixelCoord p = project_point(cam, g, pose.apply(m.centerline[0]));
  EXPECT_DOUBLE_EQ(lm[0].u, p.u);
  EXPECT_DOUBLE_EQ(lm[0].v, p.v);
  EXPECT_DOUBLE_EQ(lm[1].u, d.u);
  EXPECT_DOUBLE_EQ(lm[1].v, d.v);
}

TEST(Normalize, MinMaxToSymmetricRange) {
  Image2D img(3, 1, 1.0, ImageKind::kLineIntegral);
  img.values = {0, 1, 2};
  const NormalizedImage n = normalize_line_integrals(img);
  EXPECT_EQ(n.image.values, (std::vector<double>{-1, 0, 1}));
  EXPECT_EQ(n.min, 0);
  EXPECT_EQ(n.max, 2);
  EXPECT_EQ(n.image.kind, ImageKind::kNormalized);
}

TEST(Normalize, ConstantImageMapsToZero) {
  const Image2D img(4, 4, 1.0, ImageKind::kLineIntegral, 3.5);
  const NormalizedImage n = normalize_line_integrals(img);
  for (double v : n.image.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(n.min, 3.5);
  EXPECT_EQ(n.max, 3.5);
}

TEST(Normalize, RequiresLineIntegrals) {
  const Image2D img(2, 2, 1.0, ImageKind::kMask);
  EXPECT_THROW(normalize_line_integrals(img), Error);
}

TEST(PoissonNoise, HighDoseIsNearlyNoiseless) {
  Image2D img(64, 64, 1.0, ImageKind::kLineIntegral);
  for (std::size_t i = 0; i < img.size(); ++i) img.values[i] = 0.001 * static_cast<double>(i % 3000);
  const Image2D n = add_poisson_noise(img, 1e9, 7);
  double err = 0;
  for (std::size_t i = 0; i < img.size(); ++i) err += std::abs(n.values[i] - img.values[i]);
  EXPECT_LT(err / static_cast<double>(img.size()), 1e-3);
}

TEST(PoissonNoise, SeedDeterminesOutput) {
  const Image2D img(32, 32, 1.0, ImageKind::kLineIntegral, 1.0);
  EXPECT_EQ(add_poisson_noise(img, 1e4, 11).values, add_poisson_noise(img, 1e4, 11).values);
  EXPECT_NE(add_poisson_noise(img, 1e4, 11).values, add_poisson_noise(img, 1e4, 12).values);
}

TEST(PoissonNoise, VarianceMatchesPhotonStatistics) {
  const Image2D img(128, 128, 1.0, ImageKind::kLineIntegral, 0.0);
  const Image2D n = add_poisson_noise(img, 1e4, 3);
  const double mean = std::accumulate(n.values.begin(), n.values.end(), 0.0) / n.size();
  double var = 0;
  for (double v : n.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n.size() - 1);
  EXPECT_NEAR(var, 1e-4, 0.2e-4);
  EXPECT_NEAR(mean, 0.0, 1e-3);
}

TEST(PoissonNoise, InvalidPhotonCountRejected) {
  const Image2D img(2, 2, 1.0, ImageKind::kLineIntegral);
  EXPECT_THROW(add_poisson_noise(img, 0.0, 1), Error);
}

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>

#include "forge/forge.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace forge;

namespace {

const SampleConfig& shared_sample() {
  static const SampleConfig sc = sample_configuration(31, "phantom0", FemurSide::kLeft, 0, SamplingRanges{});
  return sc;
}

struct Rendered {
  SampleRecord record;
  RenderProducts products;
};

const Rendered& shared_render() {
  static const Rendered r = [] {
    Rendered out;
    out.record = render_sample(fixture::small_config(), fixture::small_ct(), shared_sample(), &out.products);
    return out;
  }();
  return r;
}

}  // namespace

TEST(Phantom, FourMaterialLevels) {
  const PhantomSpec spec = fixture::small_phantom();
  const ScalarVolume ct = make_phantom_ct(spec);
  const std::set<float> levels(ct.values.begin(), ct.values.end());
  EXPECT_EQ(levels, (std::set<float>{-1000.0f, 40.0f, 200.0f, 1200.0f}));
  EXPECT_EQ(ct.kind, VolumeKind::kHu);
  EXPECT_NEAR(ct.grid.center_point().norm(), 0.0, 1e-9);
}

TEST(Phantom, BoneShellVolumes) {
  PhantomSpec spec;
  spec.dims = {432, 136, 4};
  spec.spacing_mm = 0.25;
  const ScalarVolume ct = make_phantom_ct(spec);
  const double voxel = std::pow(spec.spacing_mm, 3);
  const double len = spec.dims[2] * spec.spacing_mm;
  const double r_out = spec.bone_outer_radius_mm;
  const double r_in = r_out - spec.cortical_wall_mm;
  const auto cortical = std::count(ct.values.begin(), ct.values.end(), 1200.0f);
  const auto trabecular = std::count(ct.values.begin(), ct.values.end(), 200.0f);
  EXPECT_NEAR(cortical * voxel / (2 * oracle::shell_volume(r_out, r_in, len)), 1.0, 0.02);
  EXPECT_NEAR(trabecular * voxel / (2 * oracle::shell_volume(r_in, 0, len)), 1.0, 0.02);
}

TEST(Phantom, VariantsDifferAndAttributesLocateBones) {
  const PhantomSpec base;
  EXPECT_NE(base.variant(0).bone_offset_mm, base.variant(1).bone_offset_mm);
  const auto attrs = phantom_attributes(base.variant(2), 2);
  EXPECT_EQ(attrs.at("variant"), 2);
  EXPECT_EQ(attrs.at("femur_axes").at("left").at("center_mm").at(0).get<double>(), 39.0);
  EXPECT_EQ(attrs.at("femur_axes").at("right").at("center_mm").at(0).get<double>(), -39.0);
}

TEST(Config, DefaultsValidateAndRoundTrip) {
  PipelineConfig c;
  c.alignment["ct1"]["left"] = FemurAlignment{Vec3(1, 2, 3), Vec3(4, 5, 6)};
  EXPECT_NO_THROW(c.validate());
  const PipelineConfig r = pipeline_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_EQ(config_hash(r), config_hash(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  const nlohmann::json base = to_json(PipelineConfig{});
  for (const auto& path : {"/extra", "/cdm/extra", "/ranges/extra", "/detector/extra", "/noise/extra"}) {
    nlohmann::json j = base;
    j[nlohmann::json::json_pointer(path)] = 1;
    try {
      pipeline_config_from_json(j);
      FAIL() << path;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse) << path;
      EXPECT_NE(std::string(e.what()).find("extra"), std::string::npos);
    }
  }
}

TEST(Config, InvalidValuesRejected) {
  nlohmann::json j = to_json(PipelineConfig{});
  j["detector"]["cols"] = 0;
  EXPECT_THROW(pipeline_config_from_json(j), Error);
  j = to_json(PipelineConfig{});
  j["ranges"]["source_to_isocenter_mm"] = {500, 400};
  EXPECT_THROW(pipeline_config_from_json(j), Error);
  j = to_json(PipelineConfig{});
  j["alignment"] = {{"ct1", {{"middle", {{"rotation_deg", {0, 0, 0}}, {"translation_mm", {0, 0, 0}}}}}}};
  EXPECT_THROW(pipeline_config_from_json(j), Error);
}

TEST(Config, PartialJsonKeepsDefaults) {
  const PipelineConfig c = pipeline_config_from_json({{"detector", {{"cols", 64}}}, {"workers", 3}});
  EXPECT_EQ(c.detector_cols, 64);
  EXPECT_EQ(c.detector_rows, 512);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.cdm_mu_per_mm, 0.68);
}

TEST(Config, HashTracksContentNotScheduling) {
  const PipelineConfig a;
  PipelineConfig b = a;
  b.workers = 8;
  b.threads_per_worker = 3;
  b.write_previews = true;
  b.samples_per_femur = 5;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.pixel_size_mm = 0.7;
  EXPECT_NE(config_hash(a), config_hash(b));
  PipelineConfig c = a;
  c.cdm.notch_width_mm = 0.6;
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, LoadFromFile) {
  fixture::TempDir dir("cfg");
  {
    std::ofstream f(dir / "c.json");
    f << R"({"belief_sigma_px": 4.0})";
  }
  EXPECT_EQ(load_pipeline_config(dir / "c.json").belief_sigma_px, 4.0);
  {
    std::ofstream f(dir / "bad.json");
    f << "{";
  }
  EXPECT_THROW(load_pipeline_config(dir / "bad.json"), Error);
}

TEST(Alignment, HeaderAxesPlaceNotchCenterOnBone) {
  const PipelineConfig cfg = fixture::small_config();
  const CtVolume ct = fixture::small_ct();
  const PhantomSpec spec = fixture::small_phantom();
  for (FemurSide side : kBothSides) {
    const RigidTransform t = femur_alignment(cfg, ct, side);
    const Vec3 mid = t.apply(Vec3(0, 0, 0.5 * cfg.cdm.notched_length()));
    EXPECT_LT((mid - spec.bone_center(side == FemurSide::kLeft)).norm(), 1e-9);
    EXPECT_LT((t.apply_direction(Vec3::UnitZ()) - Vec3::UnitZ()).norm(), 1e-12);
  }
}

TEST(Alignment, ConfigOverridesHeader) {
  PipelineConfig cfg = fixture::small_config();
  cfg.alignment["phantom0"]["right"] = FemurAlignment{Vec3(0, 90, 0), Vec3(1, 2, 3)};
  const RigidTransform t = femur_alignment(cfg, fixture::small_ct(), FemurSide::kRight);
  EXPECT_LT((t.translation - Vec3(1, 2, 3)).norm(), 1e-12);
  CtVolume bare = fixture::small_ct("bare");
  bare.attributes = nlohmann::json::object();
  EXPECT_THROW(femur_alignment(cfg, bare, FemurSide::kLeft), Error);
}

TEST(SceneLayout, IsocenterOffsetIsVolumeTranslation) {
  const PipelineConfig cfg = fixture::small_config();
  const CtVolume ct = fixture::small_ct();
  const SampleConfig& sc = shared_sample();
  const SceneLayout s = scene_layout(cfg, ct, sc);
  const Vec3 anchor = femur_alignment(cfg, ct, sc.femur_side).apply(Vec3(0, 0, 0.5 * cfg.cdm.notched_length()));
  EXPECT_LT((s.ct_to_world.apply(anchor) - sc.volume_translation_mm).norm(), 1e-9);
  EXPECT_TRUE(s.cdm_to_world.is_proper(1e-12));
}

TEST(RenderSample, ProducesConsistentRecord) {
  const Rendered& r = shared_render();
  const SampleRecord& rec = r.record;
  EXPECT_NO_THROW(rec.validate());
  EXPECT_EQ(rec.image.cols, 128);
  EXPECT_NEAR(rec.image.min_value(), -1.0, 1e-12);
  EXPECT_NEAR(rec.image.max_value(), 1.0, 1e-12);
  EXPECT_EQ(rec.config_hash, config_hash(fixture::small_config()));
  EXPECT_EQ(rec.pipeline_version, kPipelineVersion);
  EXPECT_LT(rec.normalization_min, rec.normalization_max);
  const double on = std::accumulate(rec.mask.values.begin(), rec.mask.values.end(), 0.0);
  EXPECT_GT(on, 0.0);
  for (int k = 0; k < 2; ++k) {
    const PixelCoord q = extract_landmark(rec.belief[k]);
    EXPECT_NEAR(q.u, rec.landmarks_px[k].u, 1e-6);
    EXPECT_NEAR(q.v, rec.landmarks_px[k].v, 1e-6);
  }
}

TEST(RenderSample, MaskLiesInsideBodyShadow) {
  const Rendered& r = shared_render();
  const ScalarVolume body = occupancy_as_scalar(r.products.body_occupancy);
  const ProjectionGeometry g = shared_sample().geometry(fixture::small_config().base_geometry());
  const PlacedVolume pv{&body, r.products.layout.cdm_to_world};
  const Image2D shadow = raycast_line_integrals(std::span(&pv, 1), r.record.camera, g);
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    if (r.record.mask.values[i] > 0) {
      EXPECT_GT(shadow.values[i], 0.0);
    }
  }
  EXPECT_GT(occupied_count(r.products.notch_occupancy), 0u);
  EXPECT_LT(occupied_count(r.products.notch_occupancy), occupied_count(r.products.body_occupancy));
}

TEST(RenderSample, CdmIsVisibleAboveAnatomy) {
  const Rendered& r = shared_render();
  const Image2D& p = r.products.line_integrals;
  double inside = 0, outside = 0;
  int n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (r.record.mask.values[i] > 0) {
      inside += p.values[i];
      ++n_in;
    } else {
      outside += p.values[i];
      ++n_out;
    }
  }
  ASSERT_GT(n_in, 0);
  EXPECT_GT(inside / n_in, outside / n_out);
}

TEST(RenderSample, Deterministic) {
  const SampleRecord again = render_sample(fixture::small_config(), fixture::small_ct(), shared_sample());
  EXPECT_EQ(again.image.values, shared_render().record.image.values);
  EXPECT_EQ(again.mask.values, shared_render().record.mask.values);
}

TEST(RenderSample, NoiseIsSeededBySample) {
  PipelineConfig cfg = fixture::small_config();
  cfg.noise_enabled = true;
  cfg.noise_photons = 1e4;
  const SampleRecord a = render_sample(cfg, fixture::small_ct(), shared_sample());
  const SampleRecord b = render_sample(cfg, fixture::small_ct(), shared_sample());
  EXPECT_TRUE(a.noise_applied);
  EXPECT_EQ(a.image.values, b.image.values);
  EXPECT_NE(a.image.values, shared_render().record.image.values);
}

TEST(Record, WriteReadRoundTrip) {
  fixture::TempDir dir("rec");
  SampleRecord rec = shared_render().record;
  rec.split = "train";
  write_record(dir.path(), rec, true);
  EXPECT_TRUE(std::filesystem::exists(dir / "image.png"));
  EXPECT_EQ(std::filesystem::file_size(dir / "image.f32raw"), 128u * 128u * 4u);
  EXPECT_EQ(std::filesystem::file_size(dir / "mask.u8raw"), 128u * 128u);
  const SampleRecord back = read_record(dir.path(), rec.config_hash);
  EXPECT_EQ(back.sample_id(), rec.sample_id());
  EXPECT_EQ(back.split, "train");
  EXPECT_EQ(back.mask.values, rec.mask.values);
  for (std::size_t i = 0; i < rec.image.size(); ++i)
    EXPECT_EQ(back.image.values[i], static_cast<double>(static_cast<float>(rec.image.values[i])));
  EXPECT_EQ(back.landmarks_px[1].u, rec.landmarks_px[1].u);
  EXPECT_EQ(to_json(back.config), to_json(rec.config));
  EXPECT_LT((back.camera.source_position - rec.camera.source_position).norm(), 1e-9);
  EXPECT_TRUE(record_is_current(dir.path(), rec.config_hash));
  EXPECT_FALSE(record_is_current(dir.path(), "0000000000000000"));
}

TEST(Record, MetaSchema) {
  const nlohmann::json m = record_meta(shared_render().record);
  for (const char* key : {"format", "version", "sample_id", "split", "pipeline_version", "config_hash", "image", "files",
                          "normalization", "landmarks_px", "belief_sigma_px", "noise_applied", "camera", "sample"})
    EXPECT_TRUE(m.contains(key)) << key;
  EXPECT_EQ(m.at("format"), "forge-sample");
  EXPECT_EQ(m.at("image").at("byte_order"), "little");
  EXPECT_EQ(m.at("sample_id"), "phantom0_left_0000");
}

TEST(Record, DamagedFilesDetected) {
  fixture::TempDir dir("rec");
  SampleRecord rec = shared_render().record;
  rec.split = "val";
  write_record(dir.path(), rec);
  std::filesystem::resize_file(dir / "belief_1.f32raw", 100);
  try {
    read_record(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTruncated);
  }
  EXPECT_FALSE(record_is_current(dir.path(), rec.config_hash));
  std::filesystem::remove(dir / "meta.json");
  EXPECT_THROW(read_record_meta(dir.path()), Error);
}

TEST(Generate, SmallDatasetWithResume) {
  fixture::TempDir dir("gen");
  std::vector<std::filesystem::path> cts;
  for (int i = 0; i < 2; ++i) {
    const PhantomSpec spec = fixture::small_phantom().variant(i);
    cts.push_back(write_volume(make_phantom_ct(spec), dir / ("phantom" + std::to_string(i) + ".json"),
                               phantom_attributes(spec, i)));
  }
  const PipelineConfig cfg = fixture::small_config();
  const auto out = dir / "data";
  std::vector<std::string> log;
  const GenerateSummary first = generate_dataset(cfg, cts, 5, out, [&](const std::string& m) { log.push_back(m); });
  EXPECT_EQ(first.total(), 12u);
  EXPECT_EQ(first.rendered, 12u);
  EXPECT_EQ(first.reused, 0u);
  EXPECT_TRUE(first.failures.empty());
  EXPECT_FALSE(log.empty());

  const auto manifest = nlohmann::json::parse(detail::read_text(out / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash"), config_hash(cfg));
  const SplitManifest m = split_manifest_from_json(manifest);
  EXPECT_EQ(m.test_samples.size(), 6u);
  for (const auto& [split, keys] : {std::pair{"train", m.train_samples}, {"val", m.val_samples}, {"test", m.test_samples}})
    for (const auto& k : keys) {
      const SampleRecord r = read_record(record_dir(out, split, k), config_hash(cfg));
      EXPECT_EQ(r.split, split);
      EXPECT_TRUE(r.config.within(cfg.ranges));
    }
  EXPECT_EQ(pipeline_config_from_json(nlohmann::json::parse(detail::read_text(out / "config.json"))).detector_cols, 128);

  const auto stamp = std::filesystem::last_write_time(record_dir(out, "test", m.test_samples[0]) / "image.f32raw");
  const GenerateSummary second = generate_dataset(cfg, cts, 5, out);
  EXPECT_EQ(second.rendered, 0u);
  EXPECT_EQ(second.reused, 12u);
  EXPECT_EQ(std::filesystem::last_write_time(record_dir(out, "test", m.test_samples[0]) / "image.f32raw"), stamp);

  std::filesystem::remove(record_dir(out, "test", m.test_samples[1]) / "meta.json");
  const GenerateSummary third = generate_dataset(cfg, cts, 5, out);
  EXPECT_EQ(third.rendered, 1u);
  EXPECT_EQ(third.reused, 11u);

  const EvaluationResult ev = evaluate_directories(out, out);
  EXPECT_TRUE(ev.missing.empty());
  EXPECT_EQ(ev.report.rows.size(), 12u);
  EXPECT_DOUBLE_EQ(ev.report.dice_stats().mean, 1.0);
  EXPECT_DOUBLE_EQ(ev.report.landmark_stats().mean, 0.0);
}

TEST(Generate, MissingCtCountsAsFailures) {
  fixture::TempDir dir("gen");
  const PhantomSpec spec = fixture::small_phantom();
  const auto good = write_volume(make_phantom_ct(spec), dir / "good.json", phantom_attributes(spec, 0));
  PipelineConfig cfg = fixture::small_config();
  cfg.samples_per_femur = 1;
  const GenerateSummary s = generate_dataset(cfg, {good, dir / "absent.json"}, 1, dir / "out");
  EXPECT_EQ(s.failures.size(), 2u);
  EXPECT_EQ(s.rendered, 2u);
  EXPECT_DOUBLE_EQ(s.failure_rate(), 0.5);
  const auto manifest = nlohmann::json::parse(detail::read_text(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest.at("failures").size(), 2u);
}

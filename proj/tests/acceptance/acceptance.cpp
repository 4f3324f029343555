// Acceptance gate: one PASS/FAIL line per criterion; nonzero exit on any FAIL.

#include <array>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <sys/wait.h>
#include <unistd.h>

#include "forge/forge.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "!") + what);
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome projector_cube() {
  const auto t0 = Clock::now();
  Outcome o;
  const ScalarVolume cube = fixture::uniform_cube(0.02, 50.0, 0.5, 2);
  ProjectionGeometry g;
  g.detector_cols = 1;
  g.detector_rows = 1;
  const CameraPose cam = camera_from_orbit(g);
  const PlacedVolume pv{&cube, RigidTransform::identity()};
  auto central = [&](double step) {
    RaycastOptions opts;
    opts.step_mm = step;
    return raycast_line_integrals(std::span(&pv, 1), cam, g, opts).values[0];
  };
  const double coarse = central(0.25);
  const double fine = central(0.125);
  const double err_coarse = std::abs(coarse - 1.0);
  const double err_fine = std::abs(fine - 1.0);
  o.check(err_coarse <= 0.01, fmt::format("central integral {:.9f} (|err| {:.3e}, tol 1%)", coarse, err_coarse));
  const double ratio = err_coarse > 0 ? err_fine / err_coarse : std::numeric_limits<double>::quiet_NaN();
  o.check(ratio >= 0.45 && ratio <= 0.55,
          fmt::format("step 0.25 -> 0.125: |err| {:.3e} -> {:.3e}, ratio {:.3f} (want 0.50 +/- 0.05)", err_coarse,
                      err_fine, ratio));
  const double secs = seconds_since(t0);
  o.check(secs < 10.0, fmt::format("{:.2f} s", secs));
  return o;
}

Outcome spline_correctness() {
  Outcome o;
  double const_err = 0;
  for (double c : {-7.9, -2.5, 0.0, 1.0, 7.9}) {
    CdmShape s;
    s.control_angles_deg.fill(c);
    for (double a : spline_joint_angles(s)) const_err = std::max(const_err, std::abs(a - c));
  }
  o.check(const_err <= 1e-9, fmt::format("constant controls max err {:.2e}", const_err));
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(-7.9, 7.9);
  std::vector<double> knots;
  for (int i = 0; i < kControlPointCount; ++i) knots.push_back(static_cast<double>(i) / (kControlPointCount - 1));
  double oracle_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    CdmShape s;
    for (double& c : s.control_angles_deg) c = u(rng);
    const oracle::DenseNaturalSpline ref(knots, {s.control_angles_deg.begin(), s.control_angles_deg.end()});
    const auto a = spline_joint_angles(s);
    for (int j = 1; j <= kNotchCount; ++j) oracle_err = std::max(oracle_err, std::abs(a[j - 1] - ref((j - 0.5) / 26.0)));
  }
  o.check(oracle_err <= 1e-9, fmt::format("100 random controls vs dense oracle at 26 notches, max err {:.2e}", oracle_err));
  return o;
}

Outcome kinematics_oracle() {
  Outcome o;
  const CdmGeometrySpec spec;
  double tip_err = 0;
  for (double deg = -7.9; deg <= 7.9 + 1e-9; deg += 0.79) {
    CdmShape s;
    s.control_angles_deg.fill(deg);
    const CdmPosedModel m = forward_kinematics(s, spec);
    const auto tip = oracle::uniform_bend_tip(kNotchCount, spec.notch_pitch_mm, deg * kDeg2Rad);
    tip_err = std::max(tip_err, (m.landmark_distal - Vec3(0, tip[0], tip[1])).norm());
  }
  o.check(tip_err <= 1e-9, fmt::format("uniform-bend tip max err {:.2e} mm", tip_err));
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-7.9, 7.9);
  double link_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    CdmShape s;
    for (double& c : s.control_angles_deg) c = u(rng);
    const CdmPosedModel m = forward_kinematics(s, spec);
    for (int k = 1; k <= kNotchCount; ++k)
      link_err = std::max(link_err, std::abs((m.centerline[k] - m.centerline[k - 1]).norm() - spec.notch_pitch_mm));
  }
  o.check(link_err <= 1e-9, fmt::format("100 random shapes, max link length err {:.2e} mm", link_err));
  return o;
}

Outcome voxelizer_convergence() {
  const auto t0 = Clock::now();
  Outcome o;
  const double pad = 1.5;
  const int offsets = 16;
  for (double r : {3.0, 5.0, 8.0}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(r * 1000));
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    std::vector<Vec3> centers;
    for (int i = 0; i < offsets; ++i) centers.emplace_back(jitter(rng), jitter(rng), jitter(rng));
    const double exact = oracle::sphere_volume(r);
    const std::array<double, 3> spacings{0.4, 0.2, 0.1};
    std::vector<double> errs(spacings.size(), 0.0);
    for (const Vec3& c : centers) {
      const TriangleMesh sphere = make_icosphere(c, r, 7);
      for (std::size_t s = 0; s < spacings.size(); ++s) {
        const double h = spacings[s];
        const int n = static_cast<int>(std::ceil(2 * (r + pad) / h));
        VolumeGrid g;
        g.dims = {n, n, n};
        g.spacing_mm = Vec3::Constant(h);
        g.origin_mm = Vec3::Constant(-0.5 * h * (n - 1));
        const OccupancyVolume occ = voxelize_mesh_on_grid(sphere, g);
        errs[s] += std::abs(occupied_count(occ) * h * h * h - exact) / exact / offsets;
      }
    }
    o.check(errs[2] < 0.01, fmt::format("r={} mm: mean |err| {:.4f}% / {:.4f}% / {:.4f}% at 0.4/0.2/0.1 mm", r,
                                        100 * errs[0], 100 * errs[1], 100 * errs[2]));
    o.check(errs[0] > errs[1] && errs[1] > errs[2], fmt::format("r={} mm monotone", r));
  }
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, fmt::format("{:.1f} s", secs));
  return o;
}

Outcome belief_round_trip() {
  Outcome o;
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> u(20.0, 491.0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const PixelCoord p{u(rng), u(rng)};
    const Image2D b = belief_map(p, {5.0, 1.0}, 512, 512);
    const PixelCoord q = extract_landmark(b);
    worst = std::max(worst, std::hypot(q.u - p.u, q.v - p.v));
  }
  o.check(worst <= 0.05, fmt::format("100 sub-pixel landmarks, sigma 5: worst error {:.2e} px", worst));
  return o;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FORGE_CLI_PATH) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_all(const fs::path& p) { return detail::read_text(p); }

Outcome end_to_end_determinism() {
  const auto t0 = Clock::now();
  Outcome o;
  fixture::TempDir dir("acceptance");
  const fs::path log = dir / "cli.log";
  const fs::path cts = dir / "cts";
  const int rc_phantom = run_cli("phantom --out " + cts.string() + " --count 2", log);
  o.check(rc_phantom == 0, fmt::format("forge phantom exit {}", rc_phantom));
  const std::string ct_args = (cts / "phantom0.json").string() + " " + (cts / "phantom1.json").string();
  for (const char* run : {"a", "b"}) {
    const int rc = run_cli("generate --cts " + ct_args + " --seed 20240 --samples-per-femur 5 --out " + (dir / run).string(), log);
    o.check(rc == 0, fmt::format("forge generate run {} exit {}", run, rc));
  }
  if (!o.pass) {
    o.notes.push_back(read_all(log));
    return o;
  }

  std::size_t files = 0, mismatched = 0, metas = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), dir / "a");
    if (!fs::exists(dir / "b" / rel) || read_all(e.path()) != read_all(dir / "b" / rel)) ++mismatched;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "b")) files_b += e.is_regular_file();
  o.check(mismatched == 0 && files == files_b && files > 0,
          fmt::format("{} files compared byte for byte, {} differ", files, mismatched));

  const SamplingRanges ranges;
  std::size_t out_of_range = 0, sdd_off = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (e.path().filename() != "meta.json") continue;
    ++metas;
    const SampleRecord r = read_record(e.path().parent_path());
    if (!r.config.within(ranges)) ++out_of_range;
    if (r.config.source_to_detector_mm != 1200.0 ||
        std::abs((r.camera.detector_center - r.camera.source_position).norm() - 1200.0) > 1e-9)
      ++sdd_off;
  }
  o.check(metas == 20, fmt::format("{} records (want 20)", metas));
  o.check(out_of_range == 0, fmt::format("{} records with sampled fields out of range", out_of_range));
  o.check(sdd_off == 0, fmt::format("{} records with SDD != 1200 mm", sdd_off));
  const double secs = seconds_since(t0);
  o.check(secs < 300.0, fmt::format("{:.1f} s", secs));
  return o;
}

Outcome split_manifest() {
  Outcome o;
  const std::vector<std::string> ids{"ct01", "ct02", "ct03", "ct04", "ct05"};
  const SplitManifest m = make_split(ids, 1000, 20240);
  o.check(m.train_cts.size() == 4 && m.test_cts.size() == 1,
          fmt::format("{} train CTs / {} test CT", m.train_cts.size(), m.test_cts.size()));
  o.check(m.train_samples.size() == 7273 && m.val_samples.size() == 727 && m.test_samples.size() == 2000,
          fmt::format("train/val/test = {}/{}/{}", m.train_samples.size(), m.val_samples.size(), m.test_samples.size()));
  const std::set<std::string> test(m.test_cts.begin(), m.test_cts.end());
  std::size_t leaks = 0;
  for (const auto* keys : {&m.train_samples, &m.val_samples})
    for (const auto& k : *keys) leaks += test.count(k.ct_id);
  o.check(leaks == 0, fmt::format("{} test-CT samples in train/val", leaks));
  return o;
}

Outcome metrics_identities() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::bernoulli_distribution bit(0.4);
  bool symmetric = true, in_range = true, identity = true, disjoint = true;
  for (int t = 0; t < 100; ++t) {
    Image2D a(32, 32, 0.62, ImageKind::kMask), b(32, 32, 0.62, ImageKind::kMask);
    for (double& v : a.values) v = bit(rng);
    for (double& v : b.values) v = bit(rng);
    Image2D inv = a;
    for (double& v : inv.values) v = 1.0 - v;
    const double ab = dice(a, b);
    symmetric = symmetric && ab == dice(b, a);
    in_range = in_range && ab >= 0.0 && ab <= 1.0;
    identity = identity && dice(a, a) == 1.0;
    disjoint = disjoint && dice(a, inv) == 0.0;
  }
  o.check(symmetric, "dice symmetric");
  o.check(in_range, "dice in [0, 1]");
  o.check(identity, "dice(a, a) = 1");
  o.check(disjoint, "dice of complements = 0");
  const double e = landmark_error_mm({0, 0}, {3, 4}, 0.62);
  o.check(std::abs(e - 3.10) <= 1e-12, fmt::format("3-4-5 at 0.62 mm/px = {:.12f} mm", e));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"projector-cube", projector_cube},
      {"spline-correctness", spline_correctness},
      {"kinematics-oracle", kinematics_oracle},
      {"voxelizer-convergence", voxelizer_convergence},
      {"belief-extraction", belief_round_trip},
      {"end-to-end-determinism", end_to_end_determinism},
      {"split-manifest", split_manifest},
      {"metrics-identities", metrics_identities},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o.check(false, std::string("exception: ") + ex.what());
    }
    failed += !o.pass;
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}

#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ssimadv/idx.hpp"
#include "ssimadv/report.hpp"
#include "test_support.hpp"

using namespace ssimadv;

namespace {

namespace fs = std::filesystem;

// Scratch directory under the test working dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::path("tmp_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                       const std::vector<unsigned char>& px) {
  std::string out;
  put_be32(out, 0x00000803);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  for (unsigned char b : px) out.push_back(static_cast<char>(b));
  return out;
}

std::string idx_labels(std::uint32_t count, const std::vector<unsigned char>& lbl) {
  std::string out;
  put_be32(out, 0x00000801);
  put_be32(out, count);
  for (unsigned char b : lbl) out.push_back(static_cast<char>(b));
  return out;
}

OutcomeRecord record(int id, const std::string& attack, bool success, double ssim) {
  OutcomeRecord r;
  r.image_id = id;
  r.attack = attack;
  r.true_label = 3;
  r.adv_label = success ? 5 : 3;
  r.success = success;
  r.ssim = ssim;
  r.l1 = 1.5;
  r.l2 = 0.75;
  r.linf = 0.25;
  r.c_final = 0.001;
  r.iterations = 42;
  return r;
}

}  // namespace

TEST_CASE("idx loader scales bytes to [0,1]") {
  TempDir dir("idx_scale");
  write_bytes(dir.file("img"), idx_images(1, 2, 2, {0, 255, 128, 64}));
  write_bytes(dir.file("lbl"), idx_labels(1, {7}));

  const Dataset<float> data = load_idx(dir.file("img"), dir.file("lbl"));
  REQUIRE(data.size() == 1);
  CHECK(data.labels[0] == 7);
  CHECK(data.images[0].shape.height == 2);
  CHECK(data.images[0].shape.width == 2);
  CHECK(data.images[0].shape.channels == 1);
  CHECK(data.images[0].data[0] == 0.0f);
  CHECK(data.images[0].data[1] == 1.0f);
  CHECK(data.images[0].data[2] == 128.0f / 255.0f);
  CHECK(data.images[0].data[3] == 64.0f / 255.0f);
}

TEST_CASE("idx loader rejects malformed files") {
  TempDir dir("idx_bad");
  const std::string img = idx_images(2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  const std::string lbl = idx_labels(2, {0, 1});

  SUBCASE("missing file") {
    CHECK_THROWS_AS((void)load_idx(dir.file("nope"), dir.file("nope2")), std::runtime_error);
  }
  SUBCASE("label magic in the image slot") {
    write_bytes(dir.file("img"), lbl);
    write_bytes(dir.file("lbl"), lbl);
    CHECK_THROWS_WITH_AS((void)load_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("bad IDX image magic"), std::runtime_error);
  }
  SUBCASE("image magic in the label slot") {
    write_bytes(dir.file("img"), img);
    write_bytes(dir.file("lbl"), img);
    CHECK_THROWS_WITH_AS((void)load_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("bad IDX label magic"), std::runtime_error);
  }
  SUBCASE("count mismatch") {
    write_bytes(dir.file("img"), img);
    write_bytes(dir.file("lbl"), idx_labels(3, {0, 1, 2}));
    CHECK_THROWS_WITH_AS((void)load_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("count mismatch"), std::runtime_error);
  }
  SUBCASE("truncated header") {
    write_bytes(dir.file("img"), img.substr(0, 6));
    write_bytes(dir.file("lbl"), lbl);
    CHECK_THROWS_WITH_AS((void)load_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("truncated IDX header"), std::runtime_error);
  }
  SUBCASE("truncated pixel data") {
    write_bytes(dir.file("img"), img.substr(0, img.size() - 2));
    write_bytes(dir.file("lbl"), lbl);
    CHECK_THROWS_WITH_AS((void)load_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("truncated at image 1"), std::runtime_error);
  }
  SUBCASE("truncated labels") {
    write_bytes(dir.file("img"), img);
    write_bytes(dir.file("lbl"), lbl.substr(0, lbl.size() - 1));
    CHECK_THROWS_WITH_AS((void)load_idx(dir.file("img"), dir.file("lbl")),
                         doctest::Contains("truncated at label 1"), std::runtime_error);
  }
}

TEST_CASE("idx save/load round trip is exact for byte-valued pixels") {
  TempDir dir("idx_rt");
  Rng rng(404);
  Dataset<float> data;
  for (int i = 0; i < 5; ++i) {
    ArrX<float> px(9);
    for (int j = 0; j < 9; ++j)
      px[j] = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    data.images.emplace_back(std::move(px), Shape{3, 3, 1});
    data.labels.push_back(static_cast<int>(rng.uniform_int(0, 9)));
  }

  save_idx(data, dir.file("img"), dir.file("lbl"));
  const Dataset<float> back = load_idx(dir.file("img"), dir.file("lbl"));
  REQUIRE(back.size() == data.size());
  for (int i = 0; i < data.size(); ++i) {
    CHECK(back.labels[i] == data.labels[i]);
    CHECK((back.images[i].data == data.images[i].data).all());
  }

  Dataset<float> mismatched = data;
  mismatched.labels.pop_back();
  CHECK_THROWS_AS(save_idx(mismatched, dir.file("i2"), dir.file("l2")),
                  std::invalid_argument);
}

TEST_CASE("cifar batch loader splits label and planar pixels") {
  TempDir dir("cifar");
  std::string bytes;
  for (int rec = 0; rec < 2; ++rec) {
    bytes.push_back(static_cast<char>(rec + 3));
    for (int j = 0; j < 3072; ++j)
      bytes.push_back(static_cast<char>((rec + j) % 256));
  }
  write_bytes(dir.file("batch.bin"), bytes);

  const Dataset<float> data = load_cifar_batch(dir.file("batch.bin"));
  REQUIRE(data.size() == 2);
  CHECK(data.labels[0] == 3);
  CHECK(data.labels[1] == 4);
  CHECK(data.images[0].shape.channels == 3);
  CHECK(data.images[0].data[0] == 0.0f);
  CHECK(data.images[1].data[0] == 1.0f / 255.0f);

  write_bytes(dir.file("trunc.bin"), bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_WITH_AS((void)load_cifar_batch(dir.file("trunc.bin")),
                       doctest::Contains("truncated"), std::runtime_error);
  write_bytes(dir.file("empty.bin"), "");
  CHECK_THROWS_AS((void)load_cifar_batch(dir.file("empty.bin")), std::runtime_error);
}

TEST_CASE("csv float formatting uses six significant digits") {
  CHECK(format_g6(0.39) == "0.39");
  CHECK(format_g6(1.0) == "1");
  CHECK(format_g6(0.0) == "0");
  CHECK(format_g6(0.123456789) == "0.123457");
  CHECK(format_g6(-0.5) == "-0.5");
  CHECK(format_g6(1e10) == "1e+10");
}

TEST_CASE("outcomes csv writes the documented schema and parses back") {
  std::vector<OutcomeRecord> recs;
  recs.push_back(record(0, "pgd", true, 0.39));
  recs.push_back(record(1, "skipped", false, 1.0));
  recs[1].l1 = recs[1].l2 = recs[1].linf = 0;
  recs[1].c_final = 0;
  recs[1].iterations = 0;
  recs[1].adv_label = 8;

  const std::string csv = outcomes_to_csv(recs);
  const auto first_nl = csv.find('\n');
  CHECK(csv.substr(0, first_nl) ==
        "image_id,attack,true_label,adv_label,success,ssim,l1,l2,linf,c_final,iterations");
  CHECK(csv.find("0,pgd,3,5,1,0.39,1.5,0.75,0.25,0.001,42\n") != std::string::npos);
  CHECK(csv.find("1,skipped,3,8,0,1,0,0,0,0,0\n") != std::string::npos);

  const auto back = parse_outcomes_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image_id == 0);
  CHECK(back[0].attack == "pgd");
  CHECK(back[0].success);
  CHECK(back[0].ssim == 0.39);
  CHECK(back[0].l1 == 1.5);
  CHECK(back[0].iterations == 42);
  CHECK(back[1].attack == "skipped");
  CHECK(!back[1].success);
  CHECK(back[1].ssim == 1.0);
  // the in-memory image never travels through the file
  CHECK(back[0].image.data.size() == 0);

  // writing the parsed records again reproduces the same bytes
  CHECK(outcomes_to_csv(back) == csv);
}

TEST_CASE("empty record sets produce header-only csvs") {
  CHECK(outcomes_to_csv({}) ==
        "image_id,attack,true_label,adv_label,success,ssim,l1,l2,linf,c_final,iterations\n");
  CHECK(tail_to_csv({}) == "attack,ssim_min,success_rate,proportion\n");
  CHECK(parse_outcomes_csv(outcomes_to_csv({})).empty());
  CHECK(compute_tail({}).empty());
  CHECK(summarize({}).empty());
}

TEST_CASE("outcomes csv parser rejects malformed input") {
  CHECK_THROWS_WITH_AS((void)parse_outcomes_csv("bogus header\n1,2,3\n"),
                       doctest::Contains("header"), std::runtime_error);
  CHECK_THROWS_WITH_AS((void)parse_outcomes_csv(""), doctest::Contains("header"),
                       std::runtime_error);
  const std::string head = std::string(kOutcomesHeader) + "\n";
  CHECK_THROWS_WITH_AS((void)parse_outcomes_csv(head + "1,pgd,3\n"),
                       doctest::Contains("3 fields"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      (void)parse_outcomes_csv(head + "x,pgd,3,5,1,0.39,1.5,0.75,0.25,0.001,42\n"),
      doctest::Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      (void)parse_outcomes_csv(head + "0,pgd,3,5,1,nope,1.5,0.75,0.25,0.001,42\n"),
      doctest::Contains("unparsable"), std::runtime_error);
  // trailing blank lines are tolerated
  CHECK(parse_outcomes_csv(head + "0,pgd,3,5,1,0.39,1.5,0.75,0.25,0.001,42\n\n").size() == 1);
}

TEST_CASE("tail curve thresholds, accounting identity and monotonicity") {
  std::vector<OutcomeRecord> recs;
  recs.push_back(record(0, "pgd", true, 0.95));
  recs.push_back(record(1, "pgd", true, 0.50));
  recs.push_back(record(2, "pgd", false, 0.80));
  recs.push_back(record(3, "pgd", true, -0.20));  // succeeds at negative SSIM
  recs.push_back(record(4, "skipped", false, 1.0));

  const auto tail = compute_tail(recs);
  REQUIRE(tail.size() == 21);  // skipped rows contribute no curve
  for (int i = 0; i <= 20; ++i) {
    CHECK(tail[i].attack == "pgd");
    CHECK(tail[i].ssim_min == i / 20.0);
  }

  // threshold 0 is unfiltered: every success and every produced image counts
  CHECK(tail[0].success_rate == 3.0 / 4.0);
  CHECK(tail[0].proportion == 1.0);
  // the negative-SSIM success drops out of every positive threshold
  CHECK(tail[1].success_rate == 2.0 / 4.0);
  // row at 0.50: the 0.5-SSIM success still counts (inclusive threshold)
  CHECK(tail[10].success_rate == 2.0 / 4.0);
  CHECK(tail[11].success_rate == 1.0 / 4.0);
  // rows at 0.80 / 0.95: the failed record affects proportion, not success
  CHECK(tail[16].success_rate == 1.0 / 4.0);
  CHECK(tail[16].proportion == 2.0 / 4.0);
  CHECK(tail[19].proportion == 1.0 / 4.0);
  CHECK(tail[20].success_rate == 0.0);

  for (int i = 1; i <= 20; ++i) {
    CHECK(tail[i].success_rate <= tail[i - 1].success_rate);
    CHECK(tail[i].proportion <= tail[i - 1].proportion);
  }
}

TEST_CASE("tail curve sees the printed ssim, not the in-memory one") {
  // 0.8499999999999999 prints as 0.85 at six significant digits, so it must
  // clear the 0.85 threshold: the curve is a function of the emitted CSV.
  std::vector<OutcomeRecord> recs;
  recs.push_back(record(0, "pgd", true, 0.8499999999999999));
  const auto tail = compute_tail(recs);
  CHECK(tail[17].ssim_min == 0.85);
  CHECK(tail[17].success_rate == 1.0);
  CHECK(tail[18].success_rate == 0.0);
}

TEST_CASE("tail curve keeps per-attack blocks in first-appearance order") {
  std::vector<OutcomeRecord> recs;
  recs.push_back(record(0, "enet", true, 0.9));
  recs.push_back(record(0, "ssim", true, 0.99));
  recs.push_back(record(1, "enet", false, 0.7));
  const auto tail = compute_tail(recs);
  REQUIRE(tail.size() == 42);
  CHECK(tail[0].attack == "enet");
  CHECK(tail[21].attack == "ssim");
  CHECK(tail[21].success_rate == 1.0);

  const std::string csv = tail_to_csv(tail);
  CHECK(csv.find("attack,ssim_min,success_rate,proportion\n") == 0);
  CHECK(csv.find("enet,0,0.5,1\n") != std::string::npos);
  CHECK(csv.find("ssim,0.95,1,1\n") != std::string::npos);
}

TEST_CASE("summaries aggregate successful records only") {
  std::vector<OutcomeRecord> recs;
  recs.push_back(record(0, "pgd", true, 0.9));
  recs[0].l1 = 2.0;
  recs[0].l2 = 1.0;
  recs[0].linf = 0.5;
  recs.push_back(record(1, "pgd", true, 0.6));
  recs[1].l1 = 4.0;
  recs[1].l2 = 3.0;
  recs[1].linf = 0.1;
  recs.push_back(record(2, "pgd", false, 0.999));
  recs[2].l1 = 100;  // failed rows must not leak into the means
  recs.push_back(record(0, "enet", false, 0.3));
  recs.push_back(record(3, "skipped", false, 1.0));

  const auto sums = summarize(recs);
  REQUIRE(sums.size() == 2);
  CHECK(sums[0].attack == "pgd");
  CHECK(sums[0].attacked == 3);
  CHECK(sums[0].successes == 2);
  CHECK(sums[0].success_rate == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(*sums[0].mean_l1 == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(*sums[0].mean_l2 == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(*sums[0].mean_linf == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(*sums[0].mean_ssim == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(*sums[0].median_ssim == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(*sums[0].min_ssim == 0.6);

  CHECK(sums[1].attack == "enet");
  CHECK(sums[1].attacked == 1);
  CHECK(sums[1].successes == 0);
  CHECK(sums[1].success_rate == 0.0);
  CHECK(!sums[1].mean_l1.has_value());
  CHECK(!sums[1].mean_ssim.has_value());
  CHECK(!sums[1].median_ssim.has_value());
}

TEST_CASE("summary median handles odd counts") {
  std::vector<OutcomeRecord> recs;
  recs.push_back(record(0, "pgd", true, 0.2));
  recs.push_back(record(1, "pgd", true, 0.9));
  recs.push_back(record(2, "pgd", true, 0.5));
  CHECK(*summarize(recs)[0].median_ssim == 0.5);
}

TEST_CASE("pgm writer emits binary P5 with round-half-up bytes") {
  TempDir dir("pgm");
  ArrX<float> px(6);
  px << 0.0f, 1.0f, 0.5f, 0.25f, -0.5f, 2.0f;  // last two exercise clamping
  Image<float> img(std::move(px), Shape{2, 3, 1});
  write_image(img, dir.file("x.pgm"));

  const std::string bytes = read_text_file(dir.file("x.pgm"));
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  CHECK(p[0] == 0);
  CHECK(p[1] == 255);
  CHECK(p[2] == 128);  // 0.5 * 255 + 0.5 = 128.0 exactly
  CHECK(p[3] == 64);   // 0.25 * 255 + 0.5 = 64.25
  CHECK(p[4] == 0);    // clamped low
  CHECK(p[5] == 255);  // clamped high
}

TEST_CASE("ppm writer interleaves planar channels") {
  TempDir dir("ppm");
  ArrX<float> px(6);  // 1x2 RGB, channel-planar in memory
  px << 1.0f, 0.0f,   // red plane
      0.0f, 1.0f,     // green plane
      0.0f, 0.0f;     // blue plane
  Image<float> img(std::move(px), Shape{1, 2, 3});
  write_image(img, dir.file("x.ppm"));

  const std::string bytes = read_text_file(dir.file("x.ppm"));
  const std::string header = "P6\n2 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  // pixel 0 = pure red, pixel 1 = pure green
  CHECK(p[0] == 255);
  CHECK(p[1] == 0);
  CHECK(p[2] == 0);
  CHECK(p[3] == 0);
  CHECK(p[4] == 255);
  CHECK(p[5] == 0);

  Image<float> two(ArrX<float>::Zero(8), Shape{2, 2, 2});
  CHECK_THROWS_AS(write_image(two, dir.file("bad")), std::invalid_argument);
}

TEST_CASE("exhibit dump keeps the k lowest-ssim successes per attack") {
  TempDir dir("exh");
  std::vector<OutcomeRecord> recs;
  std::vector<Image<float>> originals;
  for (int i = 0; i < 5; ++i) {
    originals.push_back(Image<float>(ArrX<float>::Constant(4, 0.5f), Shape{2, 2, 1}));
    auto r = record(i, "pgd", i != 3, 0.5 + 0.1 * i);  // image 3 fails
    r.image = Image<float>(ArrX<float>::Constant(4, 0.25f), Shape{2, 2, 1});
    recs.push_back(std::move(r));
  }
  recs.push_back(record(0, "enet", false, 0.2));  // no successes: no files

  write_exhibits(recs, originals, dir.file("ex"), 2);

  // successes have ssim 0.5 (img0), 0.6 (img1), 0.7 (img2), 0.9 (img4);
  // the two worst are images 0 and 1
  CHECK(fs::exists(dir.file("ex") + "/pgd_worst1_img0_adv.pgm"));
  CHECK(fs::exists(dir.file("ex") + "/pgd_worst1_img0_orig.pgm"));
  CHECK(fs::exists(dir.file("ex") + "/pgd_worst2_img1_adv.pgm"));
  CHECK(fs::exists(dir.file("ex") + "/pgd_worst2_img1_orig.pgm"));
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.file("ex"))) ++files;
  CHECK(files == 4);
}

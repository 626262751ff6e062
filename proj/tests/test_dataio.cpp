#include <gtest/gtest.h>

#include "support.hpp"

using namespace printmlp;
using namespace testsupport;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& text) {
  static const auto dir = temp_dir("dataio");
  auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

Dataset column(std::vector<double> v) {
  Dataset d;
  d.n_classes = 1;
  d.features = Matrix<double>(0, 1);
  d.attribute_names = {"c"};
  for (double x : v) {
    d.features.append_row(std::vector<double>{x});
    d.labels.push_back(0);
  }
  return d;
}

Dataset labelled(std::size_t n, int classes) {
  Dataset d;
  d.n_classes = classes;
  d.features = Matrix<double>(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    d.features.append_row(std::vector<double>{static_cast<double>(i)});
    d.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  }
  return d;
}

}  // namespace

TEST(LoadCsv, RemapsLabelsToDenseIds) {
  auto p = write_tmp("three.csv", "1.0,2.0,5\n3.0,4.0,6\n5.0,6.0,5\n");
  auto d = load_csv(p);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(d.n_classes, 2);
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"5", "6"}));
  EXPECT_EQ(d.features(2, 1), 6.0);
  d.validate();
}

TEST(LoadCsv, NumericLabelsSortNumerically) {
  auto p = write_tmp("num.csv", "0,10\n0,9\n0,10\n0,100\n");
  auto d = load_csv(p);
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"9", "10", "100"}));
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0, 1, 2}));
}

TEST(LoadCsv, EmptyFileIsNoRows) {
  auto p = write_tmp("empty.csv", "");
  try {
    load_csv(p);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("no rows"), std::string::npos);
  }
}

TEST(LoadCsv, MissingFile) { EXPECT_THROW(load_csv("/nonexistent/x.csv"), InputError); }

TEST(LoadCsv, NonNumericCellReportsLocation) {
  auto p = write_tmp("bad.csv", "1,2,a\n3,x,b\n");
  try {
    load_csv(p);
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  }
}

TEST(LoadCsv, RaggedRowReportsLine) {
  auto p = write_tmp("ragged.csv", "1,2,a\n3,b\n");
  EXPECT_THROW(load_csv(p), InputError);
}

TEST(LoadCsv, HeaderDetectionAndNamedLabel) {
  auto p = write_tmp("hdr.csv", "kind,w,h\ncat,1,2\ndog,3,4\n");
  CsvOptions o;
  o.label_column = std::string("kind");
  auto d = load_csv(p, o);
  EXPECT_EQ(d.attribute_names, (std::vector<std::string>{"w", "h"}));
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(d.features(1, 0), 3.0);

  o.label_column = 0;
  auto e = load_csv(p, o);
  EXPECT_EQ(e.rows(), 2u);

  o.label_column = std::string("nope");
  EXPECT_THROW(load_csv(p, o), InputError);
}

TEST(LoadCsv, WhitespaceRunsAsDelimiter) {
  auto p = write_tmp("ws.txt", "1.5\t\t2.5\t1\n3.5 4.5  2\n");
  CsvOptions o;
  o.delimiter = '\t';
  auto d = load_csv(p, o);
  EXPECT_EQ(d.rows(), 2u);
  EXPECT_EQ(d.cols(), 2u);
  EXPECT_EQ(d.features(1, 1), 4.5);
}

TEST(LoadCsv, LabelColumnOutOfRange) {
  auto p = write_tmp("oor.csv", "1,2\n");
  CsvOptions o;
  o.label_column = 5;
  EXPECT_THROW(load_csv(p, o), InputError);
}

TEST(LoadCsv, ParseLabelColumn) {
  EXPECT_EQ(std::get<int>(parse_label_column("-1")), -1);
  EXPECT_EQ(std::get<int>(parse_label_column("3")), 3);
  EXPECT_EQ(std::get<std::string>(parse_label_column("class")), "class");
}

TEST(Normalize, ScalesWithOwnStats) {
  auto d = normalize(column({0, 5, 10}), column({0, 5, 10}));
  EXPECT_EQ(d.features.data(), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Normalize, ClampsTestRowsBeyondTrainRange) {
  auto d = normalize(column({12, -1}), column({0, 10}));
  EXPECT_EQ(d.features.data(), (std::vector<double>{1.0, 0.0}));
}

TEST(Normalize, ConstantColumnMapsToZeroWithWarning) {
  auto stats = fit_normalization(column({4, 4, 4}));
  ASSERT_EQ(stats.warnings.size(), 1u);
  auto d = normalize(column({4, 4, 4}), stats);
  EXPECT_EQ(d.features.data(), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Normalize, ColumnMismatch) { EXPECT_THROW(normalize(column({1}), NormStats{}), InputError); }

TEST(Normalize, RenormalizingIsIdempotent) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    auto d = make_blobs(3, 4, 30, 2.0, rng.next());
    auto once = normalize(d, d);
    auto twice = normalize(once, once);
    for (std::size_t i = 0; i < once.features.size(); ++i)
      ASSERT_NEAR(once.features.data()[i], twice.features.data()[i], 1e-12);
    for (double v : once.features.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Split, CountsAndDeterminism) {
  auto d = labelled(10, 2);
  auto a = split(d, {0.7, 1});
  EXPECT_EQ(a.train.rows(), 7u);
  EXPECT_EQ(a.test.rows(), 3u);
  auto b = split(d, {0.7, 1});
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.test_rows, b.test_rows);
  auto c = split(d, {0.7, 2});
  EXPECT_EQ(c.train.rows(), 7u);
}

TEST(Split, StratifiedBalance) {
  auto d = labelled(100, 2);
  auto s = split(d, {0.7, 11});
  for (const auto* part : {&s.train, &s.test}) {
    const auto ones = std::count(part->labels.begin(), part->labels.end(), 1);
    const auto zeros = static_cast<long>(part->rows()) - ones;
    EXPECT_LE(std::abs(ones - zeros), 1);
  }
}

TEST(Split, SingleSampleClassGoesToTrain) {
  auto d = labelled(9, 2);
  d.n_classes = 3;
  d.labels[4] = 2;
  auto s = split(d, {0.7, 3});
  EXPECT_NE(std::find(s.train.labels.begin(), s.train.labels.end(), 2), s.train.labels.end());
  EXPECT_EQ(s.warnings.size(), 1u);
}

TEST(Split, Preconditions) {
  EXPECT_THROW(split(labelled(10, 2), {1.0, 0}), InputError);
  EXPECT_THROW(split(labelled(3, 2), {0.7, 0}), InputError);
}

TEST(Split, EveryClassInBothPartsWhenFeasible) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const int k = static_cast<int>(rng.uniform_int(2, 5));
    auto d = labelled(static_cast<std::size_t>(rng.uniform_int(2 * k, 60)), k);
    auto s = split(d, {rng.uniform(0.2, 0.8), rng.next()});
    for (int c = 0; c < k; ++c) {
      ASSERT_NE(std::find(s.train.labels.begin(), s.train.labels.end(), c), s.train.labels.end());
      ASSERT_NE(std::find(s.test.labels.begin(), s.test.labels.end(), c), s.test.labels.end());
    }
  }
}

TEST(KFold, EqualFolds) {
  auto folds = kfold(labelled(10, 2), 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    EXPECT_EQ(f.validation.rows(), 2u);
    EXPECT_EQ(f.train.rows(), 8u);
  }
}

TEST(KFold, UnevenFolds) {
  auto folds = kfold(labelled(3, 1), 2, 1);
  ASSERT_EQ(folds.size(), 2u);
  EXPECT_EQ(folds[0].validation.rows(), 2u);
  EXPECT_EQ(folds[1].validation.rows(), 1u);
}

TEST(KFold, PartitionLaw) {
  auto folds = kfold(labelled(23, 3), 4, 9);
  std::vector<std::size_t> all;
  for (const auto& f : folds) all.insert(all.end(), f.validation_rows.begin(), f.validation_rows.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(23);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
}

TEST(KFold, Preconditions) {
  EXPECT_THROW(kfold(labelled(3, 1), 4, 0), InputError);
  EXPECT_THROW(kfold(labelled(3, 1), 1, 0), InputError);
}

TEST(Manifest, JsonRoundTripRebuildsSplits) {
  auto all = make_blobs(3, 2, 60, 3.0, 4);
  auto p = write_tmp("blobs.csv", to_csv(all));
  auto prep = prepare_dataset(p.string(), "label", ',', {0.7, 12});
  nlohmann::json j = prep.manifest;
  auto m = j.get<DatasetManifest>();
  EXPECT_EQ(m.norm, prep.manifest.norm);
  EXPECT_EQ(m.class_names, prep.manifest.class_names);
  auto again = prepare_dataset(m);
  EXPECT_EQ(again.train.features, prep.train.features);
  EXPECT_EQ(again.test.labels, prep.test.labels);
  EXPECT_EQ(m.train_rows + m.test_rows, 60u);
}

TEST(Manifest, TrainFeaturesInUnitInterval) {
  auto all = make_blobs(2, 3, 40, 1.0, 2);
  auto p = write_tmp("unit.csv", to_csv(all));
  auto prep = prepare_dataset(p.string(), "-1", ',', {0.7, 0});
  for (double v : prep.train.features.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (double v : prep.test.features.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

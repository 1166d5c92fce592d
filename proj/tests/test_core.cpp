// Copyright 2026 The mlnoise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "mlnoise/core.hpp"

namespace fs = std::filesystem;
using namespace mlnoise;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mlnoise_core_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_examples = 200;
  s.n_features = 6;
  s.n_classes = 5;
  s.mean_labels_per_example = 1.5;
  s.seed = 7;
  return s;
}

}  // namespace

TEST(Synthetic, SaturatedPresenceGivesAllOnes) {
  auto spec = small_spec();
  spec.mean_labels_per_example = static_cast<double>(spec.n_classes);
  const auto ds = make_synthetic_dataset(spec);
  for (auto v : ds.labels.flat()) EXPECT_EQ(v, 1);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const auto a = make_synthetic_dataset(small_spec());
  const auto b = make_synthetic_dataset(small_spec());
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  auto other = small_spec();
  other.seed = 8;
  EXPECT_NE(make_synthetic_dataset(other).labels, a.labels);
}

TEST(Synthetic, MeanLabelCountMatchesSpec) {
  SyntheticSpec spec;
  spec.n_examples = 4000;
  spec.n_classes = 12;
  spec.mean_labels_per_example = 1.5;
  spec.seed = 3;
  const auto ds = make_synthetic_dataset(spec);
  double total = 0.0;
  for (auto v : ds.labels.flat()) total += v;
  EXPECT_NEAR(total / 4000.0, 1.5, 0.15);
}

TEST(Synthetic, PresenceCalibrationAccountsForRedraw) {
  const double q = presence_probability_for_mean(1.5, 12);
  // Expected count after one redraw of the empty set.
  const double expected = 12 * q * (1 + std::pow(1 - q, 12));
  EXPECT_NEAR(expected, 1.5, 1e-12);
  EXPECT_LT(q, 1.5 / 12);
  EXPECT_EQ(presence_probability_for_mean(5.0, 5), 1.0);
}

TEST(Synthetic, EntriesAreBinaryAndFinite) {
  const auto ds = make_synthetic_dataset(small_spec());
  for (auto v : ds.labels.flat()) EXPECT_LE(v, 1);
  for (double v : ds.features.flat()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(ds.features.rows(), ds.labels.rows());
}

TEST(Synthetic, CustomPresenceVector) {
  auto spec = small_spec();
  spec.class_presence = std::vector<double>{1.0, 0.0, 0.0, 0.0, 0.0};
  const auto ds = make_synthetic_dataset(spec);
  for (std::size_t i = 0; i < ds.labels.rows(); ++i) {
    EXPECT_EQ(ds.labels(i, 0), 1);
    EXPECT_EQ(ds.labels(i, 1), 0);
  }
}

TEST(Synthetic, RejectsInvalidSpec) {
  auto spec = small_spec();
  spec.mean_labels_per_example = 6.0;
  EXPECT_THROW(make_synthetic_dataset(spec), ValidationError);
  spec = small_spec();
  spec.mean_labels_per_example = 0.0;
  EXPECT_THROW(make_synthetic_dataset(spec), ValidationError);
  spec = small_spec();
  spec.feature_noise_std = 0.0;
  EXPECT_THROW(make_synthetic_dataset(spec), ValidationError);
  spec = small_spec();
  spec.class_presence = std::vector<double>{0.5};
  EXPECT_THROW(make_synthetic_dataset(spec), ValidationError);
}

TEST(LoadDataset, ReadsShapes) {
  const auto dir = temp_dir("shapes");
  write_text(dir / "f.csv", "1.5,2,3\r\n-4,5e-1,6\n7,8,9\n");
  write_text(dir / "y.csv", "0,1\n1,1\n0,0\n");
  const auto ds = load_dataset(dir / "f.csv", dir / "y.csv");
  EXPECT_EQ(ds.features.rows(), 3u);
  EXPECT_EQ(ds.features.cols(), 3u);
  EXPECT_EQ(ds.labels.rows(), 3u);
  EXPECT_EQ(ds.labels.cols(), 2u);
  EXPECT_DOUBLE_EQ(ds.features(1, 1), 0.5);
  EXPECT_EQ(ds.labels(1, 0), 1);
}

TEST(LoadDataset, NonBinaryLabelNamesCell) {
  const auto dir = temp_dir("nonbinary");
  write_text(dir / "f.csv", "1\n2\n");
  write_text(dir / "y.csv", "0,1\n2,0\n");
  try {
    load_dataset(dir / "f.csv", dir / "y.csv");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'2'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 1"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, RowCountMismatch) {
  const auto dir = temp_dir("mismatch");
  write_text(dir / "f.csv", "1\n2\n3\n4\n5\n");
  write_text(dir / "y.csv", "0\n1\n0\n1\n");
  try {
    load_dataset(dir / "f.csv", dir / "y.csv");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
}

TEST(LoadDataset, UnparseableFeatureCell) {
  const auto dir = temp_dir("unparseable");
  write_text(dir / "f.csv", "1,2\n3,abc\n");
  write_text(dir / "y.csv", "0\n1\n");
  try {
    load_dataset(dir / "f.csv", dir / "y.csv");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("abc"), std::string::npos);
    EXPECT_NE(msg.find("row 2, column 2"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, RaggedRowsRejected) {
  const auto dir = temp_dir("ragged");
  write_text(dir / "f.csv", "1,2\n3\n");
  write_text(dir / "y.csv", "0\n1\n");
  EXPECT_THROW(load_dataset(dir / "f.csv", dir / "y.csv"), ValidationError);
}

TEST(LoadDataset, SaveLoadRoundTrip) {
  const auto dir = temp_dir("roundtrip");
  const auto ds = make_synthetic_dataset(small_spec());
  save_dataset(ds, dir / "f.csv", dir / "y.csv");
  const auto back = load_dataset(dir / "f.csv", dir / "y.csv");
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Split, SizesFollowRounding) {
  Dataset ds{FeatureMatrix(10, 2), LabelMatrix(10, 1)};
  const auto s = train_test_split(ds, 0.2, 1);
  EXPECT_EQ(s.train.labels.rows(), 8u);
  EXPECT_EQ(s.test.labels.rows(), 2u);
}

TEST(Split, DeterministicDisjointAndExhaustive) {
  Dataset ds{FeatureMatrix(37, 1), LabelMatrix(37, 1)};
  for (std::size_t i = 0; i < 37; ++i) ds.features(i, 0) = static_cast<double>(i);
  const auto a = train_test_split(ds, 0.3, 11);
  const auto b = train_test_split(ds, 0.3, 11);
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.test_rows, b.test_rows);

  std::vector<std::size_t> all = a.train_rows;
  all.insert(all.end(), a.test_rows.begin(), a.test_rows.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(37);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  EXPECT_EQ(all, expected);

  std::vector<double> values;
  for (double v : a.train.features.flat()) values.push_back(v);
  for (double v : a.test.features.flat()) values.push_back(v);
  std::sort(values.begin(), values.end());
  for (std::size_t i = 0; i < 37; ++i) EXPECT_EQ(values[i], static_cast<double>(i));
}

TEST(Split, RejectsFractionOutOfRange) {
  Dataset ds{FeatureMatrix(4, 1), LabelMatrix(4, 1)};
  EXPECT_THROW(train_test_split(ds, 0.0, 0), ValidationError);
  EXPECT_THROW(train_test_split(ds, 1.0, 0), ValidationError);
}

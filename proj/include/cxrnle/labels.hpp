#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cxrnle {

// Thrown for malformed inputs (CSV rows, config values, label encodings).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// The 14 CheXpert observation labels. Integer codes are stable.
enum class Label : std::uint8_t {
  EnlargedCardiomediastinum = 0,
  Cardiomegaly,
  LungOpacity,
  LungLesion,
  Edema,
  Consolidation,
  Pneumonia,
  Atelectasis,
  Pneumothorax,
  PleuralEffusion,
  PleuralOther,
  Fracture,
  SupportDevices,
  NoFinding,
};

inline constexpr std::size_t kNumLabels = 14;
inline constexpr std::size_t kNumSubstantiveLabels = 13;

inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::EnlargedCardiomediastinum, Label::Cardiomegaly,  Label::LungOpacity,
    Label::LungLesion,                Label::Edema,         Label::Consolidation,
    Label::Pneumonia,                 Label::Atelectasis,   Label::Pneumothorax,
    Label::PleuralEffusion,           Label::PleuralOther,  Label::Fracture,
    Label::SupportDevices,            Label::NoFinding,
};

inline constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "Enlarged Cardiomediastinum", "Cardiomegaly",     "Lung Opacity",
    "Lung Lesion",                "Edema",            "Consolidation",
    "Pneumonia",                  "Atelectasis",      "Pneumothorax",
    "Pleural Effusion",           "Pleural Other",    "Fracture",
    "Support Devices",            "No Finding",
};

constexpr std::size_t index_of(Label l) { return static_cast<std::size_t>(l); }
constexpr std::string_view label_name(Label l) { return kLabelNames[index_of(l)]; }

inline std::optional<Label> parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kNumLabels; ++i)
    if (kLabelNames[i] == name) return static_cast<Label>(i);
  return std::nullopt;
}

// Absent means the label is not mentioned at all.
enum class Certainty : std::uint8_t { Absent = 0, Negative, Uncertain, Positive };

inline constexpr std::array<std::string_view, 4> kCertaintyNames = {"absent", "negative",
                                                                    "uncertain", "positive"};

constexpr std::string_view certainty_name(Certainty c) {
  return kCertaintyNames[static_cast<std::size_t>(c)];
}

inline std::optional<Certainty> parse_certainty(std::string_view name) {
  for (std::size_t i = 0; i < kCertaintyNames.size(); ++i)
    if (kCertaintyNames[i] == name) return static_cast<Certainty>(i);
  return std::nullopt;
}

constexpr bool is_present(Certainty c) {
  return c == Certainty::Uncertain || c == Certainty::Positive;
}

// Bitset over Label codes.
class LabelSet {
public:
  constexpr LabelSet() = default;
  constexpr LabelSet(std::initializer_list<Label> labels) {
    for (Label l : labels) insert(l);
  }

  constexpr void insert(Label l) { bits_ |= bit(l); }
  constexpr void erase(Label l) { bits_ &= static_cast<std::uint16_t>(~bit(l)); }
  constexpr bool contains(Label l) const { return (bits_ & bit(l)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(__builtin_popcount(bits_)); }
  constexpr std::uint16_t bits() const { return bits_; }
  constexpr bool subset_of(LabelSet o) const { return (bits_ & ~o.bits_) == 0; }

  constexpr LabelSet operator&(LabelSet o) const { return from_bits(bits_ & o.bits_); }
  constexpr LabelSet operator|(LabelSet o) const { return from_bits(bits_ | o.bits_); }
  constexpr LabelSet operator-(LabelSet o) const { return from_bits(bits_ & ~o.bits_); }
  constexpr bool operator==(const LabelSet&) const = default;

  // Labels in code order.
  std::vector<Label> to_vector() const {
    std::vector<Label> out;
    for (Label l : kAllLabels)
      if (contains(l)) out.push_back(l);
    return out;
  }

private:
  static constexpr std::uint16_t bit(Label l) {
    return static_cast<std::uint16_t>(1u << index_of(l));
  }
  static constexpr LabelSet from_bits(unsigned b) {
    LabelSet s;
    s.bits_ = static_cast<std::uint16_t>(b);
    return s;
  }
  std::uint16_t bits_ = 0;
};

inline constexpr LabelSet kSubstantiveLabels = [] {
  LabelSet s;
  for (std::size_t i = 0; i < kNumSubstantiveLabels; ++i) s.insert(static_cast<Label>(i));
  return s;
}();

// Total assignment Label -> Certainty; default is all Absent.
class LabelState {
public:
  constexpr LabelState() = default;
  constexpr LabelState(std::initializer_list<std::pair<Label, Certainty>> init) {
    for (auto [l, c] : init) set(l, c);
  }

  constexpr Certainty operator[](Label l) const { return values_[index_of(l)]; }
  constexpr void set(Label l, Certainty c) { values_[index_of(l)] = c; }

  // Labels mentioned as Uncertain or Positive.
  constexpr LabelSet present_set() const {
    LabelSet s;
    for (Label l : kAllLabels)
      if (is_present((*this)[l])) s.insert(l);
    return s;
  }

  constexpr bool operator==(const LabelState&) const = default;

private:
  std::array<Certainty, kNumLabels> values_{};
};

struct LabelCertainty {
  Label label;
  Certainty certainty;
  bool operator==(const LabelCertainty&) const = default;
  auto operator<=>(const LabelCertainty&) const = default;
};

} // namespace cxrnle

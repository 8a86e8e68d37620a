#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/math.hpp"
#include "ovlift/merging.hpp"

namespace ovlift {

struct TagSet {
  std::vector<std::string> tags; // unique, first-seen order
  Matrix text_embeddings;        // C x D, rows unit-norm (filled by backend)
};

struct CropEmbedding {
  int coarse_mask_id = -1;
  int view_id = -1;
  std::vector<double> vector; // unit-norm
};

enum class LabelStrategy { Score, Number };

inline LabelStrategy parse_label_strategy(const std::string& s) {
  if (s == "score") return LabelStrategy::Score;
  if (s == "number") return LabelStrategy::Number;
  throw config_error("unknown label strategy: " + s + " (expected score or number)");
}

inline std::string label_strategy_name(LabelStrategy s) {
  return s == LabelStrategy::Score ? "score" : "number";
}

inline std::string fold_tag(const std::string& s) {
  size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  std::string out = s.substr(begin, end - begin);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// One tag per line, '#' starts a comment, entries case-folded.
inline std::set<std::string> load_blocklist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open blocklist: " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string tag = fold_tag(line);
    if (!tag.empty()) out.insert(tag);
  }
  return out;
}

/// Union of all frame tags, case-folded, deduplicated in first-seen order,
/// minus the blocklist. Embeddings are left empty for the backend to fill.
inline TagSet collect_open_tags(const std::vector<std::vector<std::string>>& per_frame_tags,
                                const std::set<std::string>& blocklist) {
  TagSet set;
  std::set<std::string> seen;
  for (const auto& frame : per_frame_tags)
    for (const std::string& raw : frame) {
      std::string tag = fold_tag(raw);
      if (tag.empty() || blocklist.count(tag) || seen.count(tag)) continue;
      seen.insert(tag);
      set.tags.push_back(tag);
    }
  return set;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw argument_error("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw argument_error("cosine_similarity: zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

namespace detail {

struct MemberMatch {
  bool usable = false;
  int tag = -1;      // argmax over tags
  double score = 0;  // max cosine
};

/// Best tag for one coarse mask: similarity to tag c = max over the mask's
/// views; argmax ties -> lower tag index.
inline MemberMatch match_member(const std::vector<const CropEmbedding*>& views,
                                const TagSet& tag_set) {
  MemberMatch best;
  if (views.empty() || tag_set.tags.empty()) return best;
  const int c_count = static_cast<int>(tag_set.tags.size());
  for (int c = 0; c < c_count; ++c) {
    std::vector<double> text(tag_set.text_embeddings.row_ptr(c),
                             tag_set.text_embeddings.row_ptr(c) + tag_set.text_embeddings.cols);
    double sim = -2.0;
    for (const CropEmbedding* ce : views) sim = std::max(sim, cosine_similarity(ce->vector, text));
    if (!best.usable || sim > best.score) {
      best.usable = true;
      best.tag = c;
      best.score = sim;
    }
  }
  return best;
}

} // namespace detail

/// Assigns a label and a confidence to every instance that has at least one
/// usable crop embedding among its composition members.
///
/// score:  the member with the highest best-cosine wins (tie -> earlier
///         composition member); its tag and score become label/confidence.
/// number: members vote with their argmax tags; the modal tag wins, vote ties
///         break toward the tag whose carriers reach the higher best score
///         (then lower tag index); confidence = best score among carriers.
inline std::vector<Instance> match_labels(std::vector<Instance> instances,
                                          const std::vector<CropEmbedding>& crop_embeddings,
                                          const TagSet& tag_set, LabelStrategy strategy,
                                          std::vector<std::string>* warnings = nullptr) {
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  if (tag_set.tags.empty()) {
    warn("no tags available after filtering; instances stay unlabeled");
    return instances;
  }
  if (tag_set.text_embeddings.rows != static_cast<int>(tag_set.tags.size()))
    throw consistency_error("match_labels: tag embeddings do not cover the tag list");

  std::map<int, std::vector<const CropEmbedding*>> by_mask;
  for (const CropEmbedding& ce : crop_embeddings) by_mask[ce.coarse_mask_id].push_back(&ce);

  for (Instance& inst : instances) {
    std::vector<detail::MemberMatch> matches;
    for (int mask_id : inst.composition) {
      auto it = by_mask.find(mask_id);
      if (it == by_mask.end()) {
        warn("instance " + std::to_string(inst.id) + ": coarse mask " + std::to_string(mask_id) +
             " has no crop embedding; skipped");
        continue;
      }
      detail::MemberMatch m = detail::match_member(it->second, tag_set);
      if (m.usable) matches.push_back(m);
    }
    if (matches.empty()) {
      inst.label.reset();
      inst.confidence.reset();
      continue;
    }

    int chosen_tag = -1;
    double confidence = 0;
    if (strategy == LabelStrategy::Score) {
      size_t best = 0;
      for (size_t i = 1; i < matches.size(); ++i)
        if (matches[i].score > matches[best].score) best = i;
      chosen_tag = matches[best].tag;
      confidence = matches[best].score;
    } else {
      std::map<int, int> votes;
      std::map<int, double> tag_best;
      for (const auto& m : matches) {
        ++votes[m.tag];
        auto it = tag_best.find(m.tag);
        if (it == tag_best.end() || m.score > it->second) tag_best[m.tag] = m.score;
      }
      for (const auto& [tag, count] : votes) {
        if (chosen_tag < 0 || count > votes[chosen_tag] ||
            (count == votes[chosen_tag] && tag_best[tag] > tag_best[chosen_tag]))
          chosen_tag = tag;
      }
      confidence = tag_best[chosen_tag];
    }
    inst.label = tag_set.tags[static_cast<size_t>(chosen_tag)];
    inst.confidence = confidence;
  }
  return instances;
}

} // namespace ovlift

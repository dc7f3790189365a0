#include "trace/explain.hpp"

#include <cstdio>

#include <json.hpp>

namespace trace {

using nlohmann::json;
using nlohmann::ordered_json;

Explanation explain(const TraceModel& model, const Example& ex) {
  EvalForward out = model_forward_eval(model, ex);
  Explanation e;
  e.id = ex.id;
  e.predicted_probability = out.p_hat;
  e.predicted_label = out.predicted;
  e.threshold = model.config.threshold;
  e.selected_index = out.selection.selected_index;
  for (std::size_t i = 0; i < ex.captions.size(); ++i) {
    CaptionReport c;
    c.index = i + 1;
    c.text = ex.captions[i];
    c.score = out.selection.scores[i];
    c.raw_prob = out.selection.raw_probs[i];
    c.gumbel_prob = out.selection.gumbel_probs[i];
    e.captions.push_back(std::move(c));
  }
  return e;
}

std::string explanation_to_json(const Explanation& e) {
  ordered_json j;
  j["id"] = e.id;
  j["predicted_probability"] = e.predicted_probability;
  j["predicted_label"] = e.predicted_label;
  j["threshold"] = e.threshold;
  j["selected_index"] = e.selected_index;
  j["captions"] = ordered_json::array();
  for (const CaptionReport& c : e.captions) {
    ordered_json jc;
    jc["index"] = c.index;
    jc["text"] = c.text;
    jc["score"] = c.score;
    jc["raw_prob"] = c.raw_prob;
    jc["gumbel_prob"] = c.gumbel_prob;
    j["captions"].push_back(std::move(jc));
  }
  return j.dump();
}

Explanation explanation_from_json(const std::string& text) {
  json j = json::parse(text);
  Explanation e;
  e.id = j.at("id").get<std::string>();
  e.predicted_probability = j.at("predicted_probability").get<double>();
  e.predicted_label = j.at("predicted_label").get<int>();
  e.threshold = j.at("threshold").get<double>();
  e.selected_index = j.at("selected_index").get<std::size_t>();
  for (const json& jc : j.at("captions")) {
    CaptionReport c;
    c.index = jc.at("index").get<std::size_t>();
    c.text = jc.at("text").get<std::string>();
    c.score = jc.at("score").get<double>();
    c.raw_prob = jc.at("raw_prob").get<double>();
    c.gumbel_prob = jc.at("gumbel_prob").get<double>();
    e.captions.push_back(std::move(c));
  }
  return e;
}

std::string render_text(const Explanation& e) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "Prediction: %s (Probability: %.4f)\n",
                e.predicted_label == 1 ? "Hateful" : "Not Hateful", e.predicted_probability);
  out += buf;
  out += "\nCaption Scores:\n\n";
  for (const CaptionReport& c : e.captions) {
    std::snprintf(buf, sizeof(buf), "%zu. %s: ", c.index, c.index == 1 ? "Text" : "Caption");
    out += buf;
    out += c.text;
    out += "\n\n";
    std::snprintf(buf, sizeof(buf), "   - Score: %.4f | Raw Prob: %.4f | Gumbel Prob: %.3f\n\n",
                  c.score, c.raw_prob, c.gumbel_prob);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "Selected Caption Index: %zu\n", e.selected_index);
  out += buf;
  return out;
}

}  // namespace trace

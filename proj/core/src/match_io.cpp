#include <sstream>

#include "exref/error.hpp"
#include "exref/io_util.hpp"
#include "exref/matcher.hpp"
#include "json.hpp"

namespace exref {

using nlohmann::json;

namespace {

json span_json(const Span& s) { return json::array({s.begin, s.end}); }

Span span_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("span must be [begin, end]");
  Span s{j[0].get<int>(), j[1].get<int>()};
  if (s.begin < 0 || s.end <= s.begin) throw DataError("empty or negative span");
  return s;
}

}  // namespace

std::string record_to_json_line(const MatchRecord& r) {
  json j = json::object();
  j["instance_id"] = r.instance_id;
  j["rule_id"] = r.rule_id;
  j["label"] = r.label;
  j["z"] = r.z;
  json bindings = json::object();
  for (const auto& [name, span] : r.bindings) bindings[name] = span_json(span);
  j["bindings"] = std::move(bindings);
  json scores = json::object();
  for (const auto& [name, score] : r.binding_scores) scores[name] = score;
  j["binding_scores"] = std::move(scores);
  json advice = json::array();
  for (const auto& a : r.advice) {
    json aj = json::object();
    if (a.kind == AdviceAtom::Kind::kAttribution) {
      aj["kind"] = "attr";
      aj["span"] = span_json(a.p);
    } else {
      aj["kind"] = "inter";
      aj["spans"] = json::array({span_json(a.p), span_json(a.q)});
    }
    aj["class"] = a.cls;
    aj["target"] = a.target;
    advice.push_back(std::move(aj));
  }
  j["advice"] = std::move(advice);
  return j.dump();
}

std::vector<MatchRecord> parse_match_records(std::string_view text, const std::string& source_name) {
  std::vector<MatchRecord> out;
  std::size_t lineno = 0;
  for (const auto& line : split(text, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      MatchRecord r;
      r.instance_id = j.at("instance_id").get<std::string>();
      r.rule_id = j.at("rule_id").get<std::string>();
      r.label = j.at("label").get<int>();
      r.z = j.at("z").get<double>();
      if (!(r.z >= 0.0 && r.z <= 1.0)) throw DataError("z outside [0,1]");
      if (j.contains("bindings")) {
        for (const auto& [name, s] : j["bindings"].items()) r.bindings[name] = span_from(s);
      }
      if (j.contains("binding_scores")) {
        for (const auto& [name, s] : j["binding_scores"].items()) r.binding_scores[name] = s.get<double>();
      }
      if (j.contains("advice")) {
        for (const auto& aj : j["advice"]) {
          AdviceTarget a;
          const std::string kind = aj.at("kind").get<std::string>();
          if (kind == "attr") {
            a.p = span_from(aj.at("span"));
          } else if (kind == "inter") {
            const auto& spans = aj.at("spans");
            if (!spans.is_array() || spans.size() != 2) throw DataError("interaction needs two spans");
            a.kind = AdviceAtom::Kind::kInteraction;
            a.p = span_from(spans[0]);
            a.q = span_from(spans[1]);
          } else {
            throw DataError("unknown advice kind '" + kind + "'");
          }
          a.cls = aj.at("class").get<int>();
          a.target = aj.at("target").get<double>();
          if (a.target != 0.0 && a.target != 1.0) throw DataError("advice target must be 0 or 1");
          r.advice.push_back(a);
        }
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(source_name, lineno, std::string("malformed match record: ") + e.what());
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& e) {
      throw FormatError(source_name, lineno, e.what());
    }
  }
  return out;
}

std::vector<MatchRecord> load_match_records(const std::string& path) {
  return parse_match_records(read_file(path), path);
}

std::string serialize_records(const std::vector<MatchRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json_line(r);
    out += '\n';
  }
  return out;
}

}  // namespace exref

#include "valigen/report_io.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "valigen/error.hpp"
#include "valigen/util.hpp"

namespace valigen {

using nlohmann::json;

namespace {

std::string json_str(std::string_view s) { return json(std::string(s)).dump(); }

std::string identity_json(const WorkerIdentity& id) {
    std::string out = "{\"name\":" + json_str(id.name) + ",\"version_tag\":" + json_str(id.version_tag) +
                      ",\"checkpoint_step\":";
    out += id.checkpoint_step ? std::to_string(*id.checkpoint_step) : "null";
    return out + "}";
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
    const std::size_t k = r.confusion.k();
    std::ostringstream out;
    out << "{\n";
    out << "  \"format\": \"valigen-report/1\",\n";
    out << "  \"run\": {\"generator\":" << identity_json(r.manifest.generator_identity)
        << ",\"validator\":" << identity_json(r.manifest.validator_identity)
        << ",\"base_seed\":" << r.manifest.base_seed << ",\"catalog_digest\":" << json_str(r.manifest.catalog_digest)
        << ",\"n_per_class\":" << r.n_per_class << ",\"width\":" << r.width << ",\"height\":" << r.height << "},\n";
    out << "  \"classes\": [";
    for (std::size_t i = 0; i < r.class_names.size(); ++i) out << (i ? "," : "") << json_str(r.class_names[i]);
    out << "],\n";
    out << "  \"confusion\": [";
    for (std::size_t t = 0; t < k; ++t) {
        out << (t ? ",\n    [" : "\n    [");
        for (std::size_t p = 0; p < k; ++p) out << (p ? "," : "") << r.confusion.at(t, p);
        out << "]";
    }
    out << (k ? "\n  ],\n" : "],\n");
    out << "  \"per_class\": [";
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        const auto& c = r.per_class[i];
        const std::string name = static_cast<std::size_t>(c.class_id) < r.class_names.size()
                                     ? r.class_names[static_cast<std::size_t>(c.class_id)]
                                     : std::string();
        out << (i ? ",\n    " : "\n    ") << "{\"class_id\":" << c.class_id << ",\"name\":" << json_str(name)
            << ",\"precision\":" << format_fixed6(c.precision) << ",\"recall\":" << format_fixed6(c.recall)
            << ",\"f1\":" << format_fixed6(c.f1) << ",\"support\":" << c.support << "}";
    }
    out << (r.per_class.empty() ? "],\n" : "\n  ],\n");
    out << "  \"macro\": {\"precision\":" << format_fixed6(r.macro.precision)
        << ",\"recall\":" << format_fixed6(r.macro.recall) << ",\"f1\":" << format_fixed6(r.macro.f1) << "},\n";
    out << "  \"complete\": " << (r.complete() ? "true" : "false") << ",\n";
    out << "  \"failures\": [";
    for (std::size_t i = 0; i < r.failures.size(); ++i) {
        const auto& f = r.failures[i];
        out << (i ? ",\n    " : "\n    ") << "{\"class_id\":" << f.class_id << ",\"item_index\":" << f.item_index
            << ",\"message\":" << json_str(f.message) << "}";
    }
    out << (r.failures.empty() ? "]\n" : "\n  ]\n");
    out << "}\n";
    return out.str();
}

EvalReport report_from_json(std::string_view text) {
    EvalReport r;
    try {
        const json j = json::parse(text);
        if (j.value("format", "") != "valigen-report/1") throw DataError("not a valigen report");
        const auto& run = j.at("run");
        r.manifest.generator_identity = worker_identity_from_json(run.at("generator"));
        r.manifest.validator_identity = worker_identity_from_json(run.at("validator"));
        r.manifest.base_seed = run.at("base_seed").get<std::uint64_t>();
        r.manifest.catalog_digest = run.at("catalog_digest").get<std::string>();
        r.n_per_class = run.at("n_per_class").get<int>();
        r.width = run.at("width").get<int>();
        r.height = run.at("height").get<int>();
        r.class_names = j.at("classes").get<std::vector<std::string>>();
        const std::size_t k = r.class_names.size();
        const auto& conf = j.at("confusion");
        if (conf.size() != k) throw DataError("confusion matrix size does not match class list");
        r.confusion = ConfusionMatrix(k);
        for (std::size_t t = 0; t < k; ++t) {
            if (conf[t].size() != k) throw DataError("confusion matrix is not square");
            for (std::size_t p = 0; p < k; ++p) r.confusion.at(t, p) = conf[t][p].get<std::uint64_t>();
        }
        for (const auto& c : j.at("per_class")) {
            ClassMetrics m;
            m.class_id = c.at("class_id").get<ClassId>();
            m.precision = c.at("precision").get<double>();
            m.recall = c.at("recall").get<double>();
            m.f1 = c.at("f1").get<double>();
            m.support = c.at("support").get<std::uint64_t>();
            r.per_class.push_back(m);
        }
        const auto& macro = j.at("macro");
        r.macro = {macro.at("precision").get<double>(), macro.at("recall").get<double>(), macro.at("f1").get<double>()};
        for (const auto& f : j.at("failures")) {
            r.failures.push_back({f.at("class_id").get<ClassId>(), f.at("item_index").get<int>(),
                                  f.at("message").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("bad report: ") + e.what());
    }
    return r;
}

EvalReport load_report(const std::filesystem::path& path) { return report_from_json(read_text_file(path)); }

std::string confusion_to_csv(const EvalReport& r, bool transpose) {
    const std::size_t k = r.confusion.k();
    std::string out = transpose ? "predicted\\true" : "true\\predicted";
    for (std::size_t c = 0; c < k; ++c) out += "," + csv_field(r.class_names.at(c));
    out += "\n";
    for (std::size_t a = 0; a < k; ++a) {
        out += csv_field(r.class_names.at(a));
        for (std::size_t b = 0; b < k; ++b) {
            out += "," + std::to_string(transpose ? r.confusion.at(b, a) : r.confusion.at(a, b));
        }
        out += "\n";
    }
    return out;
}

std::string ComparisonTable::to_csv() const {
    std::string out = "run,version_tag,checkpoint_step,macro_precision,macro_recall,macro_f1,status\n";
    for (const auto& r : rows) {
        out += csv_field(r.run) + "," + csv_field(r.version_tag) + ",";
        if (r.checkpoint_step) out += std::to_string(*r.checkpoint_step);
        if (r.readable) {
            out += "," + format_fixed6(r.macro_precision) + "," + format_fixed6(r.macro_recall) + "," +
                   format_fixed6(r.macro_f1) + ",ok\n";
        } else {
            out += ",,,," + csv_field("unreadable: " + r.note) + "\n";
        }
    }
    return out;
}

std::string ComparisonTable::to_text() const {
    std::vector<std::vector<std::string>> cells{{"run", "version", "step", "macro_P", "macro_R", "macro_F1"}};
    for (const auto& r : rows) {
        std::vector<std::string> line{r.run, r.version_tag.empty() ? "-" : r.version_tag,
                                      r.checkpoint_step ? std::to_string(*r.checkpoint_step) : "-"};
        if (r.readable) {
            for (double v : {r.macro_precision, r.macro_recall, r.macro_f1}) {
                std::ostringstream s;
                s << std::fixed << std::setprecision(4) << v;
                line.push_back(s.str());
            }
        } else {
            line.insert(line.end(), {"unreadable", "", ""});
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::ostringstream out;
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << line[i];
        }
        out << "\n";
    }
    return out.str();
}

ComparisonTable compare_runs(const std::vector<std::filesystem::path>& run_dirs) {
    if (run_dirs.empty()) throw DataError("no runs");
    std::vector<ComparisonRow> ok, bad;
    for (const auto& dir : run_dirs) {
        ComparisonRow row;
        row.run = dir.string();
        try {
            const EvalReport r = load_report(dir / "report.json");
            row.version_tag = r.manifest.generator_identity.version_tag;
            row.checkpoint_step = r.manifest.generator_identity.checkpoint_step;
            row.macro_precision = r.macro.precision;
            row.macro_recall = r.macro.recall;
            row.macro_f1 = r.macro.f1;
            ok.push_back(std::move(row));
        } catch (const Error& e) {
            row.readable = false;
            row.note = e.what();
            bad.push_back(std::move(row));
        }
    }
    std::stable_sort(ok.begin(), ok.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        if (a.version_tag != b.version_tag) return natural_less(a.version_tag, b.version_tag);
        return a.checkpoint_step.value_or(-1) < b.checkpoint_step.value_or(-1);
    });
    ComparisonTable table;
    table.rows = std::move(ok);
    table.rows.insert(table.rows.end(), bad.begin(), bad.end());
    return table;
}

}  // namespace valigen

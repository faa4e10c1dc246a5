#include "reviewguard/corpus.hpp"

#include "reviewguard/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

namespace reviewguard {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void report(ImportDiagnostics* diag, bool strict, const std::string& msg) {
    if (strict) throw DataError(msg);
    if (diag) diag->warnings.push_back(msg);
}

// Ott layout: <polarity>_polarity/<deceptive|truthful>_from_<site>/fold<N>/<d|t>_<hotel>_<n>.txt
void fill_ott_meta(const std::string& rel, std::map<std::string, std::string>& meta) {
    static const std::regex polarity(R"((positive|negative)_polarity)");
    static const std::regex fold(R"((?:^|/)(fold\d+)(?:/|$))");
    static const std::regex hotel(R"((?:^|/)[dt]_([a-z]+)_\d+\.txt$)");
    std::smatch m;
    if (std::regex_search(rel, m, polarity)) meta["polarity"] = m[1];
    if (std::regex_search(rel, m, fold)) meta["fold"] = m[1];
    if (std::regex_search(rel, m, hotel)) meta["hotel"] = m[1];
}

} // namespace

std::string_view to_string(Label l) { return l == Label::Spam ? "spam" : "ham"; }

std::string_view to_string(Source s) {
    switch (s) {
    case Source::Ott: return "ott";
    case Source::Yelp: return "yelp";
    case Source::Other: return "other";
    }
    return "other";
}

Label parse_label(std::string_view s) {
    const auto l = lower(s);
    if (l == "spam") return Label::Spam;
    if (l == "ham") return Label::Ham;
    throw DataError(fmt::format("invalid label '{}'", s));
}

Source parse_source(std::string_view s) {
    const auto l = lower(s);
    if (l == "ott") return Source::Ott;
    if (l == "yelp") return Source::Yelp;
    return Source::Other;
}

void Corpus::add(ReviewRecord record) {
    if (is_blank(record.text)) throw DataError(fmt::format("record '{}' has empty text", record.id));
    if (!ids_.insert(record.id).second) throw DataError(fmt::format("duplicate record id '{}'", record.id));
    records_.push_back(std::move(record));
}

bool Corpus::contains(std::string_view id) const { return ids_.contains(std::string(id)); }

std::size_t Corpus::count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [l](const auto& r) { return r.label == l; }));
}

bool Corpus::fully_labeled() const {
    return std::all_of(records_.begin(), records_.end(), [](const auto& r) { return r.label.has_value(); });
}

std::vector<ManifestRule> default_ott_manifest() {
    return {{"deceptive", Label::Spam}, {"truthful", Label::Ham}};
}

Corpus import_ott(const fs::path& root, const OttImportOptions& opts, ImportDiagnostics* diag) {
    if (!fs::is_directory(root)) throw DataError(fmt::format("not a directory: {}", root.string()));

    std::vector<std::string> rels;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) rels.push_back(fs::relative(entry.path(), root).generic_string());
    }
    std::sort(rels.begin(), rels.end());

    Corpus corpus(root.filename().string());
    for (const auto& rel : rels) {
        const auto rule = std::find_if(opts.manifest.begin(), opts.manifest.end(),
                                       [&](const ManifestRule& r) { return rel.find(r.pattern) != std::string::npos; });
        if (rule == opts.manifest.end()) {
            report(diag, opts.strict, fmt::format("{}: no manifest rule matches", rel));
            continue;
        }
        std::ifstream in(root / rel, std::ios::binary);
        if (!in) {
            report(diag, opts.strict, fmt::format("{}: unreadable", rel));
            continue;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        ReviewRecord rec{rel, buf.str(), rule->label, Source::Ott, {}};
        if (is_blank(rec.text)) {
            report(diag, opts.strict, fmt::format("{}: empty text", rel));
            continue;
        }
        fill_ott_meta(rel, rec.meta);
        corpus.add(std::move(rec));
    }
    return corpus;
}

Corpus import_jsonl(const fs::path& path, const JsonlImportOptions& opts, ImportDiagnostics* diag) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open {}", path.string()));

    Corpus corpus(path.stem().string());
    const std::size_t limit = opts.limit.value_or(SIZE_MAX);
    std::string line;
    std::size_t lineno = 0;
    while (corpus.size() < limit && std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw DataError("not a JSON object");
            const auto text = j.find(opts.text_field);
            if (text == j.end() || !text->is_string()) throw DataError(fmt::format("missing text field '{}'", opts.text_field));

            ReviewRecord rec;
            rec.text = text->get<std::string>();
            if (auto id = j.find(opts.id_field); id != j.end() && id->is_string()) {
                rec.id = id->get<std::string>();
            } else if (id != j.end() && id->is_number_integer()) {
                rec.id = std::to_string(id->get<long long>());
            } else {
                rec.id = fmt::format("{}:{}", path.stem().string(), lineno);
            }
            if (opts.label_field) {
                if (auto l = j.find(*opts.label_field); l != j.end() && !l->is_null()) {
                    if (!l->is_string()) throw DataError("label must be a string");
                    rec.label = parse_label(l->get<std::string>());
                }
            }
            rec.source = opts.default_source;
            if (auto s = j.find("source"); s != j.end() && s->is_string()) rec.source = parse_source(s->get<std::string>());
            if (auto m = j.find("meta"); m != j.end() && m->is_object()) {
                for (const auto& [k, v] : m->items()) {
                    rec.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
                }
            }
            corpus.add(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            report(diag, opts.strict, fmt::format("{}:{}: malformed line ({})", path.string(), lineno, e.what()));
        } catch (const DataError& e) {
            report(diag, opts.strict, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    return corpus;
}

std::string record_to_json_line(const ReviewRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    if (r.label) j["label"] = to_string(*r.label);
    j["source"] = to_string(r.source);
    if (!r.meta.empty()) j["meta"] = r.meta;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::size_t export_jsonl(const Corpus& corpus, const fs::path& path, bool require_labels) {
    if (require_labels && !corpus.fully_labeled()) throw DataError("export requires every record to be labeled");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
    for (const auto& r : corpus.records()) out << record_to_json_line(r) << '\n';
    if (!out) throw DataError(fmt::format("write failed: {}", path.string()));
    return corpus.size();
}

Corpus read_corpus(const fs::path& path, bool strict) {
    JsonlImportOptions opts;
    opts.label_field = "label";
    opts.strict = strict;
    return import_jsonl(path, opts);
}

} // namespace reviewguard

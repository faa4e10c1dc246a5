#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace reviewguard {

// Class order is fixed everywhere: index 0 = spam, index 1 = ham.
enum class Label { Spam = 0, Ham = 1 };
inline constexpr int kNumClasses = 2;

enum class Source { Ott, Yelp, Other };

constexpr int class_index(Label l) { return static_cast<int>(l); }
constexpr Label label_from_index(int i) { return i == 0 ? Label::Spam : Label::Ham; }

std::string_view to_string(Label l);
std::string_view to_string(Source s);
// Case-insensitive "spam"/"ham". Throws DataError otherwise.
Label parse_label(std::string_view s);
Source parse_source(std::string_view s);

struct ReviewRecord {
    std::string id;
    std::string text;
    std::optional<Label> label;
    Source source = Source::Other;
    std::map<std::string, std::string> meta;

    bool operator==(const ReviewRecord&) const = default;
};

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::string name) : name_(std::move(name)) {}

    // Throws DataError on a duplicate id or a blank text.
    void add(ReviewRecord record);
    bool contains(std::string_view id) const;

    const std::vector<ReviewRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const ReviewRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    std::size_t count(Label l) const;
    bool fully_labeled() const;

    bool operator==(const Corpus& o) const { return records_ == o.records_; }

private:
    std::string name_;
    std::vector<ReviewRecord> records_;
    std::unordered_set<std::string> ids_;
};

// Path substring -> label. The first matching rule wins.
struct ManifestRule {
    std::string pattern;
    Label label;
};

std::vector<ManifestRule> default_ott_manifest();

struct ImportDiagnostics {
    std::vector<std::string> warnings;
};

struct OttImportOptions {
    std::vector<ManifestRule> manifest = default_ott_manifest();
    bool strict = false;
};

// One record per regular file under `root`, visited in sorted relative-path
// order. Ids are the relative paths. Polarity, fold and hotel are recovered
// from the standard layout into `meta` when present.
Corpus import_ott(const std::filesystem::path& root, const OttImportOptions& opts = {},
                  ImportDiagnostics* diag = nullptr);

struct JsonlImportOptions {
    std::string text_field = "text";
    std::optional<std::string> label_field;
    std::string id_field = "id";
    std::optional<std::size_t> limit;
    bool strict = false;
    Source default_source = Source::Other;
};

// Line-delimited JSON records. A missing id falls back to "<stem>:<line>".
Corpus import_jsonl(const std::filesystem::path& path, const JsonlImportOptions& opts = {},
                    ImportDiagnostics* diag = nullptr);

// Writes {id, text, label?, source, meta?} per line. With require_labels,
// an unlabeled record is a DataError and nothing is written.
std::size_t export_jsonl(const Corpus& corpus, const std::filesystem::path& path,
                         bool require_labels = false);

// The canonical line for one record (no trailing newline).
std::string record_to_json_line(const ReviewRecord& r);

// Reads our own export format back (label field "label").
Corpus read_corpus(const std::filesystem::path& path, bool strict = true);

} // namespace reviewguard

#include "reviewguard/textprep.hpp"

#include <cstring>

namespace reviewguard {

namespace {

// Working state mirrors the reference implementation: b[0..k] is the current
// word and j marks the end of the stem once a suffix has matched.
class PorterStemmer {
public:
    explicit PorterStemmer(std::string_view word) : b_(word), k_(static_cast<int>(word.size()) - 1) {}

    std::string run() {
        if (k_ <= 1) return b_;
        step1ab();
        if (k_ > 0) {
            step1c();
            step2();
            step3();
            step4();
            step5();
        }
        return b_.substr(0, static_cast<std::size_t>(k_ + 1));
    }

private:
    bool cons(int i) const {
        switch (b_[i]) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return false;
        case 'y': return i == 0 ? true : !cons(i - 1);
        default: return true;
        }
    }

    // Number of VC sequences in b[0..j].
    int m() const {
        int n = 0;
        int i = 0;
        for (;;) {
            if (i > j_) return n;
            if (!cons(i)) break;
            ++i;
        }
        ++i;
        for (;;) {
            for (;;) {
                if (i > j_) return n;
                if (cons(i)) break;
                ++i;
            }
            ++i;
            ++n;
            for (;;) {
                if (i > j_) return n;
                if (!cons(i)) break;
                ++i;
            }
            ++i;
        }
    }

    bool vowel_in_stem() const {
        for (int i = 0; i <= j_; ++i)
            if (!cons(i)) return true;
        return false;
    }

    bool double_cons(int j) const {
        if (j < 1) return false;
        if (b_[j] != b_[j - 1]) return false;
        return cons(j);
    }

    // consonant-vowel-consonant ending at i, last consonant not w, x or y
    bool cvc(int i) const {
        if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
        const char ch = b_[i];
        return !(ch == 'w' || ch == 'x' || ch == 'y');
    }

    bool ends(std::string_view s) {
        const int len = static_cast<int>(s.size());
        if (s.back() != b_[k_]) return false;
        if (len > k_ + 1) return false;
        if (std::memcmp(b_.data() + k_ - len + 1, s.data(), s.size()) != 0) return false;
        j_ = k_ - len;
        return true;
    }

    void set_to(std::string_view s) {
        b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
        k_ = j_ + static_cast<int>(s.size());
    }

    void r(std::string_view s) {
        if (m() > 0) set_to(s);
    }

    void step1ab() {
        if (b_[k_] == 's') {
            if (ends("sses")) k_ -= 2;
            else if (ends("ies")) set_to("i");
            else if (b_[k_ - 1] != 's') --k_;
        }
        if (ends("eed")) {
            if (m() > 0) --k_;
        } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
            k_ = j_;
            if (ends("at")) set_to("ate");
            else if (ends("bl")) set_to("ble");
            else if (ends("iz")) set_to("ize");
            else if (double_cons(k_)) {
                --k_;
                const char ch = b_[k_];
                if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
            } else if (m() == 1 && cvc(k_)) {
                set_to("e");
            }
        }
    }

    void step1c() {
        if (ends("y") && vowel_in_stem()) b_[k_] = 'i';
    }

    // Each group: the first matching suffix decides, even if m() rejects it.
    bool replace_first(std::initializer_list<std::pair<std::string_view, std::string_view>> rules) {
        for (const auto& [suffix, repl] : rules) {
            if (ends(suffix)) {
                r(repl);
                return true;
            }
        }
        return false;
    }

    void step2() {
        switch (b_[k_ - 1]) {
        case 'a': replace_first({{"ational", "ate"}, {"tional", "tion"}}); break;
        case 'c': replace_first({{"enci", "ence"}, {"anci", "ance"}}); break;
        case 'e': replace_first({{"izer", "ize"}}); break;
        case 'l': replace_first({{"bli", "ble"}, {"alli", "al"}, {"entli", "ent"}, {"eli", "e"}, {"ousli", "ous"}}); break;
        case 'o': replace_first({{"ization", "ize"}, {"ation", "ate"}, {"ator", "ate"}}); break;
        case 's': replace_first({{"alism", "al"}, {"iveness", "ive"}, {"fulness", "ful"}, {"ousness", "ous"}}); break;
        case 't': replace_first({{"aliti", "al"}, {"iviti", "ive"}, {"biliti", "ble"}}); break;
        case 'g': replace_first({{"logi", "log"}}); break;
        default: break;
        }
    }

    void step3() {
        switch (b_[k_]) {
        case 'e': replace_first({{"icate", "ic"}, {"ative", ""}, {"alize", "al"}}); break;
        case 'i': replace_first({{"iciti", "ic"}}); break;
        case 'l': replace_first({{"ical", "ic"}, {"ful", ""}}); break;
        case 's': replace_first({{"ness", ""}}); break;
        default: break;
        }
    }

    bool ends_any(std::initializer_list<std::string_view> suffixes) {
        for (auto s : suffixes)
            if (ends(s)) return true;
        return false;
    }

    void step4() {
        bool hit = false;
        switch (b_[k_ - 1]) {
        case 'a': hit = ends("al"); break;
        case 'c': hit = ends_any({"ance", "ence"}); break;
        case 'e': hit = ends("er"); break;
        case 'i': hit = ends("ic"); break;
        case 'l': hit = ends_any({"able", "ible"}); break;
        case 'n': hit = ends_any({"ant", "ement", "ment", "ent"}); break;
        case 'o':
            hit = (ends("ion") && j_ >= 0 && (b_[j_] == 's' || b_[j_] == 't')) || ends("ou");
            break;
        case 's': hit = ends("ism"); break;
        case 't': hit = ends_any({"ate", "iti"}); break;
        case 'u': hit = ends("ous"); break;
        case 'v': hit = ends("ive"); break;
        case 'z': hit = ends("ize"); break;
        default: break;
        }
        if (hit && m() > 1) k_ = j_;
    }

    void step5() {
        j_ = k_;
        if (b_[k_] == 'e') {
            const int a = m();
            if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
        }
        if (b_[k_] == 'l' && double_cons(k_) && m() > 1) --k_;
    }

    std::string b_;
    int k_;
    int j_ = 0;
};

} // namespace

std::string porter_stem(std::string_view word) { return PorterStemmer(word).run(); }

} // namespace reviewguard

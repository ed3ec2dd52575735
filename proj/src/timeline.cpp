#include "sst/timeline.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sst {

using nlohmann::json;

// ─── Validation ──────────────────────────────────────────────────────────────

Transcript validate_transcript(const Transcript &raw) {
    const auto &words = raw.words;
    for (size_t i = 0; i < words.size(); ++i) {
        const WordSpan &w = words[i];
        const std::string where = " at index " + std::to_string(i + 1);
        if (w.text.empty())
            fail_validation("empty word text" + where);
        if (w.start_ms < 0)
            fail_validation("negative start" + where);
        if (w.start_ms > w.end_ms)
            fail_validation("start>end" + where);
        if (w.end_ms > raw.audio_duration_ms)
            fail_validation("end beyond duration" + where);
        if (i > 0 && w.start_ms < words[i - 1].end_ms)
            fail_validation("overlapping-out-of-order timestamps" + where);
    }
    return raw;
}

void validate_alignment(const AlignmentMap &map, int n_source_words) {
    for (size_t j = 0; j < map.links.size(); ++j) {
        int32_t src = map.links[j];
        if (src == AlignmentMap::kUnaligned)
            continue;
        if (src < 1 || src > n_source_words)
            fail_validation("alignment link out of range at target index " +
                            std::to_string(j + 1));
    }
}

// ─── Dilation ────────────────────────────────────────────────────────────────

DilationConfig derive_dilation(int D) {
    if (D < 1 || DilationConfig::encoder_keys % D != 0)
        fail_validation("D must divide 1500");
    DilationConfig cfg;
    cfg.D = D;
    cfg.l = DilationConfig::encoder_keys / D;
    cfg.dt_ms = 30000 / cfg.l;
    return cfg;
}

// ─── Vocabulary ──────────────────────────────────────────────────────────────

Vocabulary Vocabulary::toy() {
    return Vocabulary{}; // defaults are the toy layout
}

Vocabulary Vocabulary::whisper_compat() {
    Vocabulary v;
    v.mode = VocabMode::whisper_compat;
    v.n_content = 50257;
    v.vocab_size = 51865;
    v.sot = 50258;
    v.lang_en = 50259;
    v.lang_de = 50261;
    v.lang_ru = 50263;
    v.lang_ja = 50266;
    v.task_translate = 50358;
    v.task_transcribe = 50359;
    v.notimestamps = 50363;
    v.wait = 93; // repurposed content-range token; see module notes
    return v;
}

Vocabulary Vocabulary::from_mode_name(const std::string &name) {
    if (name == "toy")
        return toy();
    if (name == "whisper-compat")
        return whisper_compat();
    fail_validation("unknown vocabulary mode: " + name);
}

std::string Vocabulary::mode_name() const {
    return mode == VocabMode::toy ? "toy" : "whisper-compat";
}

int Vocabulary::lang_id(const std::string &lang) const {
    if (lang == "en") return lang_en;
    if (lang == "ja") return lang_ja;
    if (lang == "ru") return lang_ru;
    if (lang == "de") return lang_de;
    fail_validation("unknown language: " + lang);
}

int Vocabulary::task_id(const std::string &task) const {
    if (task == "transcribe") return task_transcribe;
    if (task == "translate") return task_translate;
    fail_validation("unknown task: " + task);
}

bool Vocabulary::is_special(int id) const {
    return id == sot || id == lang_en || id == lang_ja || id == lang_ru ||
           id == lang_de || id == task_transcribe || id == task_translate ||
           id == notimestamps || id == wait;
}

// ─── Label sequences ─────────────────────────────────────────────────────────

void validate_labels(const LabelSequence &labels, const Vocabulary &vocab) {
    if ((int)labels.tokens.size() != labels.dilation.l)
        fail_validation("label sequence length " +
                        std::to_string(labels.tokens.size()) +
                        " != decoder context length " +
                        std::to_string(labels.dilation.l));
    if (labels.prompt_len >= labels.dilation.l)
        fail_validation("prompt longer than decoder context");
    for (int p = labels.prompt_len + 1; p <= labels.dilation.l; ++p) {
        int32_t t = labels.at(p);
        bool content = t >= 0 && t < vocab.n_content && t != vocab.wait;
        if (t != vocab.wait && !content)
            fail_validation("non-prompt position " + std::to_string(p) +
                            " holds neither WAIT nor a content token");
    }
}

// ─── Tokenizers ──────────────────────────────────────────────────────────────

std::vector<int32_t> ByteTokenizer::encode(const std::string &text) const {
    std::vector<int32_t> out;
    out.reserve(text.size());
    for (unsigned char c : text)
        out.push_back(static_cast<int32_t>(c));
    return out;
}

std::string ByteTokenizer::decode(const std::vector<int32_t> &tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (int32_t t : tokens) {
        if (t < 0 || t > 255)
            fail_validation("byte tokenizer cannot decode id " +
                            std::to_string(t));
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

std::vector<int32_t> HashWordTokenizer::encode(const std::string &text) const {
    std::vector<int32_t> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        // FNV-1a; long words get a second token, modeling subword splits.
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : word) {
            h ^= c;
            h *= 1099511628211ull;
        }
        int n = word.size() > 4 ? 2 : 1;
        if (n > max_tokens_per_word_)
            n = max_tokens_per_word_;
        for (int k = 0; k < n; ++k)
            out.push_back(static_cast<int32_t>((h >> (8 * k)) & 0xff));
    }
    return out;
}

std::string HashWordTokenizer::decode(const std::vector<int32_t> &) const {
    fail_validation("hash-word tokenizer is not reversible");
}

// ─── Serialization ───────────────────────────────────────────────────────────

std::string transcript_to_jsonl(const Transcript &t) {
    std::ostringstream out;
    out << json{{"duration_ms", t.audio_duration_ms}}.dump() << "\n";
    for (const WordSpan &w : t.words)
        out << json{{"w", w.text}, {"s", w.start_ms}, {"e", w.end_ms}}.dump()
            << "\n";
    return out.str();
}

Transcript transcript_from_jsonl(const std::string &text) {
    Transcript t;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &e) {
            fail_validation("transcript line " + std::to_string(lineno) +
                            ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("duration_ms"))
                fail_validation("transcript header missing duration_ms");
            t.audio_duration_ms = j.at("duration_ms").get<int64_t>();
            have_header = true;
            continue;
        }
        WordSpan w;
        w.text = j.at("w").get<std::string>();
        w.start_ms = j.at("s").get<int64_t>();
        w.end_ms = j.at("e").get<int64_t>();
        t.words.push_back(std::move(w));
    }
    if (!have_header)
        fail_validation("transcript file has no header line");
    return t;
}

std::string alignment_to_jsonl(const AlignmentMap &m) {
    std::ostringstream out;
    for (size_t j = 0; j < m.links.size(); ++j) {
        json rec{{"tgt", (int64_t)j}}; // 0-based on disk
        if (m.links[j] == AlignmentMap::kUnaligned)
            rec["src"] = nullptr;
        else
            rec["src"] = m.links[j] - 1;
        out << rec.dump() << "\n";
    }
    return out.str();
}

AlignmentMap alignment_from_jsonl(const std::string &text) {
    AlignmentMap m;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &e) {
            fail_validation("alignment line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        int64_t tgt = j.at("tgt").get<int64_t>();
        if (tgt != (int64_t)m.links.size())
            fail_validation("alignment tgt indices must be 0,1,2,... in order "
                            "(line " + std::to_string(lineno) + ")");
        if (j.at("src").is_null())
            m.links.push_back(AlignmentMap::kUnaligned);
        else
            m.links.push_back(j.at("src").get<int32_t>() + 1);
    }
    return m;
}

std::string dilation_to_json(const DilationConfig &d) {
    return json{{"D", d.D}, {"l", d.l}, {"dt_ms", d.dt_ms}}.dump();
}

DilationConfig dilation_from_json(const std::string &text) {
    json j = json::parse(text);
    DilationConfig d = derive_dilation(j.at("D").get<int>());
    if (j.contains("l") && j.at("l").get<int>() != d.l)
        fail_validation("dilation json: l inconsistent with D");
    if (j.contains("dt_ms") && j.at("dt_ms").get<int>() != d.dt_ms)
        fail_validation("dilation json: dt_ms inconsistent with D");
    return d;
}

std::string labels_to_json(const LabelSequence &l) {
    return json{{"tokens", l.tokens},
                {"prompt_len", l.prompt_len},
                {"D", l.dilation.D}}
        .dump();
}

LabelSequence labels_from_json(const std::string &text) {
    json j = json::parse(text);
    LabelSequence l;
    l.tokens = j.at("tokens").get<std::vector<int32_t>>();
    l.prompt_len = j.at("prompt_len").get<int>();
    l.dilation = derive_dilation(j.at("D").get<int>());
    return l;
}

// ─── File helpers ────────────────────────────────────────────────────────────

std::string read_text_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail_runtime("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail_runtime("cannot create " + path);
    out << content;
    if (!out)
        fail_runtime("write failed: " + path);
}

} // namespace sst

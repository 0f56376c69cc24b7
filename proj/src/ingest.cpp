#include "halluspan/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "halluspan/error.hpp"
#include "halluspan/utf8.hpp"

namespace halluspan::ingest {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const json* member(const json& obj, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        if (auto it = obj.find(key); it != obj.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

std::string id_of(const json& record) {
    const auto* id = member(record, {"id"});
    if (!id) throw ValidationError("missing \"id\"");
    if (id->is_string()) return id->get<std::string>();
    if (id->is_number_integer()) return std::to_string(id->get<long long>());
    throw ValidationError("\"id\" must be a string or integer");
}

std::string required_string(const json& record, std::initializer_list<const char*> keys) {
    const auto* value = member(record, keys);
    if (!value || !value->is_string()) {
        throw ValidationError(fmt::format("missing string field \"{}\"", *keys.begin()));
    }
    return value->get<std::string>();
}

std::size_t offset(const json& value, const char* what) {
    if (!value.is_number_integer() || value.get<long long>() < 0) {
        throw ValidationError(fmt::format("{} offset must be a non-negative integer", what));
    }
    return value.get<std::size_t>();
}

std::vector<SoftLabel> parse_soft(const json& labels) {
    if (!labels.is_array()) throw ValidationError("\"soft_labels\" must be an array");
    std::vector<SoftLabel> out;
    for (const auto& item : labels) {
        if (!item.is_object()) throw ValidationError("soft label must be an object");
        const auto* start = member(item, {"start"});
        const auto* end = member(item, {"end"});
        const auto* prob = member(item, {"prob", "probability"});
        if (!start || !end || !prob || !prob->is_number()) {
            throw ValidationError("soft label needs start, end and prob");
        }
        out.emplace_back(CharSpan(offset(*start, "start"), offset(*end, "end")), prob->get<double>());
    }
    return out;
}

std::vector<HardLabel> parse_hard(const json& labels) {
    if (!labels.is_array()) throw ValidationError("\"hard_labels\" must be an array");
    std::vector<HardLabel> out;
    for (const auto& item : labels) {
        if (item.is_array() && item.size() == 2) {
            out.push_back(HardLabel{CharSpan(offset(item[0], "start"), offset(item[1], "end"))});
        } else if (item.is_object() && item.contains("start") && item.contains("end")) {
            out.push_back(HardLabel{CharSpan(offset(item["start"], "start"), offset(item["end"], "end"))});
        } else {
            throw ValidationError("hard label must be [start, end]");
        }
    }
    return out;
}

struct ParsedLabels {
    std::optional<std::vector<SoftLabel>> soft;
    std::optional<std::vector<HardLabel>> hard;
};

ParsedLabels parse_labels(const json& record) {
    ParsedLabels labels;
    if (const auto* soft = member(record, {"soft_labels"})) labels.soft = parse_soft(*soft);
    if (const auto* hard = member(record, {"hard_labels"})) labels.hard = parse_hard(*hard);
    return labels;
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        fn(number, line);
    }
}

}  // namespace

Dataset parse_dataset(std::istream& in) {
    Dataset data;
    for_each_line(in, [&](std::size_t number, const std::string& line) {
        try {
            const auto record = json::parse(line);
            if (!record.is_object()) throw ValidationError("record is not a JSON object");

            Sample sample;
            sample.id = id_of(record);
            sample.lang = required_string(record, {"lang"});
            sample.question = required_string(record, {"model_input", "question"});
            sample.answer = required_string(record, {"model_output_text", "answer", "output"});
            if (sample.answer.empty()) throw ValidationError("empty answer");
            const auto length = sample.answer_length();

            auto labels = parse_labels(record);
            if (labels.soft) check_bounds(*labels.soft, length);
            if (labels.hard) {
                check_bounds(*labels.hard, length);
                auto merged = normalize_spans(*labels.hard);
                if (merged.size() != labels.hard->size()) {
                    data.notes.push_back({number, fmt::format("sample '{}': {} overlapping gold spans merged into {}",
                                                              sample.id, labels.hard->size(), merged.size())});
                }
                labels.hard = std::move(merged);
            }
            sample.gold_soft = std::move(labels.soft);
            sample.gold_hard = std::move(labels.hard);

            data.samples.push_back(std::move(sample));
            data.lines.push_back(number);
        } catch (const json::exception& e) {
            data.errors.push_back({number, fmt::format("malformed JSON: {}", e.what())});
        } catch (const ValidationError& e) {
            data.errors.push_back({number, e.what()});
        }
    });
    if (data.samples.empty() && data.errors.empty()) data.warnings.emplace_back("dataset is empty");
    return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open dataset {}", path.string()));
    return parse_dataset(in);
}

Prediction make_prediction(std::string id, std::vector<SoftLabel> soft, double threshold) {
    auto hard = harden(soft, threshold);
    return Prediction{std::move(id), std::move(soft), std::move(hard)};
}

PredictionFile parse_predictions(std::istream& in) {
    PredictionFile file;
    for_each_line(in, [&](std::size_t number, const std::string& line) {
        try {
            const auto record = json::parse(line);
            if (!record.is_object()) throw ValidationError("record is not a JSON object");
            Prediction prediction;
            prediction.id = id_of(record);
            auto labels = parse_labels(record);
            if (labels.soft) prediction.soft = std::move(*labels.soft);
            if (labels.hard) {
                prediction.hard = normalize_spans(*labels.hard);
            } else {
                prediction.hard = harden(prediction.soft, 0.5);
            }
            file.predictions.push_back(std::move(prediction));
        } catch (const json::exception& e) {
            file.errors.push_back({number, fmt::format("malformed JSON: {}", e.what())});
        } catch (const ValidationError& e) {
            file.errors.push_back({number, e.what()});
        }
    });
    return file;
}

PredictionFile read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open predictions {}", path.string()));
    return parse_predictions(in);
}

namespace {

ordered_json soft_json(std::span<const SoftLabel> labels) {
    auto out = ordered_json::array();
    for (const auto& l : labels) {
        out.push_back({{"start", l.span.start()}, {"end", l.span.end()}, {"prob", l.probability}});
    }
    return out;
}

ordered_json hard_json(std::span<const HardLabel> labels) {
    auto out = ordered_json::array();
    for (const auto& l : labels) out.push_back({l.span.start(), l.span.end()});
    return out;
}

ordered_json record_head(const Sample& sample) {
    ordered_json record;
    record["id"] = sample.id;
    record["lang"] = sample.lang;
    record["model_input"] = sample.question;
    record["model_output_text"] = sample.answer;
    return record;
}

std::string dump(const ordered_json& record) {
    return record.dump(-1, ' ', false, ordered_json::error_handler_t::strict);
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
    for (const auto& line : lines) out << line << '\n';
    out.flush();
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

}  // namespace

std::string format_prediction(const Prediction& prediction, const Sample& sample) {
    auto record = record_head(sample);
    record["soft_labels"] = soft_json(prediction.soft);
    record["hard_labels"] = hard_json(prediction.hard);
    return dump(record);
}

std::string format_sample(const Sample& sample) {
    auto record = record_head(sample);
    if (sample.gold_soft) record["soft_labels"] = soft_json(*sample.gold_soft);
    if (sample.gold_hard) record["hard_labels"] = hard_json(*sample.gold_hard);
    return dump(record);
}

void write_predictions(std::span<const Prediction> predictions, std::span<const Sample> samples,
                       const std::filesystem::path& path) {
    std::unordered_map<std::string_view, const Sample*> by_id;
    for (const auto& s : samples) by_id.emplace(s.id, &s);

    std::vector<std::string> lines;
    lines.reserve(predictions.size());
    for (const auto& p : predictions) {
        const auto it = by_id.find(p.id);
        if (it == by_id.end()) throw ValidationError(fmt::format("prediction for unknown sample '{}'", p.id));
        lines.push_back(format_prediction(p, *it->second));
    }
    write_lines(path, lines);
}

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path) {
    std::vector<std::string> lines;
    lines.reserve(samples.size());
    for (const auto& s : samples) lines.push_back(format_sample(s));
    write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Planted corpus

namespace {

struct PhraseBank {
    std::vector<std::string> questions;
    std::vector<std::string> faithful;  // sentences that are never labeled
    std::vector<std::string> frames;    // sentences with one "{}" slot
    std::vector<std::string> planted;   // fabricated phrases that fill the slot
};

const std::map<std::string, PhraseBank>& banks() {
    static const std::map<std::string, PhraseBank> kBanks = {
        {"en",
         {{"What is the Eiffel Tower?", "Who was Marie Curie?", "What is the Amazon River known for?",
           "What is photosynthesis?", "Where is Mount Kilimanjaro?", "What does the heart do?"},
          {"It is a well known subject.", "Many people have studied it.",
           "There is a lot of information about it.", "It is often discussed in schools.",
           "Experts agree on its importance.", "It appears in many books."},
          {"It was first described {}.", "According to some sources, it happened {}.",
           "Records mention it {}.", "This was confirmed {}."},
          {"in 1887", "by a Norwegian sailor", "exactly 330 meters tall", "during the winter of 1642",
           "with twelve golden towers", "near the city of Lyon", "by the Royal Society of Peru",
           "after a flood in 1921", "using 7 million bricks", "on the island of Sardinia"}}},
        {"ar",
         {{"ما هو برج إيفل؟", "من هي ماري كوري؟", "ما هو نهر الأمازون؟", "ما هي عملية التمثيل الضوئي؟",
           "أين يقع جبل كليمنجارو؟"},
          {"هذا موضوع معروف.", "درسه كثير من الناس.", "توجد معلومات كثيرة عنه.", "يناقش غالبا في المدارس.",
           "يتفق الخبراء على أهميته."},
          {"تم وصفه لأول مرة {}.", "وفقا لبعض المصادر حدث ذلك {}.", "تذكره السجلات {}."},
          {"في عام ١٨٨٧", "على يد بحار نرويجي", "بارتفاع ٣٣٠ مترا بالضبط", "خلال شتاء عام ١٦٤٢",
           "مع اثني عشر برجا ذهبيا", "بالقرب من مدينة ليون", "بعد فيضان عام ١٩٢١", "في جزيرة سردينيا"}}},
        {"hi",
         {{"एफिल टॉवर क्या है?", "मैरी क्यूरी कौन थीं?", "अमेज़न नदी किस लिए जानी जाती है?",
           "प्रकाश संश्लेषण क्या है?", "किलिमंजारो पर्वत कहाँ है?"},
          {"यह एक जाना माना विषय है।", "बहुत से लोगों ने इसका अध्ययन किया है।",
           "इसके बारे में काफी जानकारी उपलब्ध है।", "स्कूलों में इस पर अक्सर चर्चा होती है।",
           "विशेषज्ञ इसके महत्व पर सहमत हैं।"},
          {"इसका पहली बार वर्णन {} किया गया था।", "कुछ स्रोतों के अनुसार यह {} हुआ।",
           "अभिलेखों में इसका उल्लेख {} मिलता है।"},
          {"सन 1887 में", "एक नॉर्वेजियन नाविक द्वारा", "ठीक 330 मीटर ऊँचा", "1642 की सर्दियों में",
           "बारह सुनहरे टावरों के साथ", "ल्योन शहर के पास", "1921 की बाढ़ के बाद", "सार्डिनिया द्वीप पर"}}},
    };
    return kBanks;
}

// SplitMix64: fixed output on every platform, unlike the std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::size_t below(std::size_t bound) { return static_cast<std::size_t>(next() % bound); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t state_;
};

std::vector<std::size_t> pick(Rng& rng, std::size_t population, std::size_t count) {
    std::vector<std::size_t> idx(population);
    for (std::size_t i = 0; i < population; ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(count);
    return idx;
}

std::size_t count_occurrences(std::u32string_view text, std::u32string_view needle) {
    std::size_t count = 0;
    for (auto pos = text.find(needle); pos != std::u32string_view::npos; pos = text.find(needle, pos + 1)) {
        ++count;
    }
    return count;
}

std::string fill(const std::string& frame, const std::string& phrase) {
    const auto slot = frame.find("{}");
    return frame.substr(0, slot) + phrase + frame.substr(slot + 2);
}

Sample planted_sample(const PhraseBank& bank, const std::string& lang, std::size_t index,
                      bool zero, std::uint64_t seed) {
    Rng rng(seed ^ (0xA0761D6478BD642FULL * (index + 1)));
    for (int attempt = 0; attempt < 100; ++attempt) {
        const std::size_t n_planted = zero ? 0 : 1 + rng.below(std::min<std::size_t>(3, bank.planted.size()));
        const std::size_t n_faithful = 1 + rng.below(std::min<std::size_t>(3, bank.faithful.size()));

        const auto phrases = pick(rng, bank.planted.size(), n_planted);
        std::vector<std::string> sentences;
        for (auto p : phrases) {
            sentences.push_back(fill(bank.frames[rng.below(bank.frames.size())], bank.planted[p]));
        }
        for (auto f : pick(rng, bank.faithful.size(), n_faithful)) sentences.push_back(bank.faithful[f]);
        rng.shuffle(sentences);

        std::string answer;
        for (const auto& s : sentences) {
            if (!answer.empty()) answer += ' ';
            answer += s;
        }

        // Every planted phrase exactly once, every other bank phrase absent.
        const auto decoded = utf8::decode(answer);
        bool clean = true;
        for (std::size_t p = 0; p < bank.planted.size() && clean; ++p) {
            const bool wanted = std::find(phrases.begin(), phrases.end(), p) != phrases.end();
            clean = count_occurrences(decoded, utf8::decode(bank.planted[p])) == (wanted ? 1u : 0u);
        }
        if (!clean) continue;

        Sample sample;
        sample.id = fmt::format("planted-{}-{:05}", lang, index);
        sample.lang = lang;
        sample.question = bank.questions[rng.below(bank.questions.size())];
        sample.answer = std::move(answer);
        std::vector<HardLabel> hard;
        std::vector<SoftLabel> soft;
        for (auto p : phrases) {
            const auto needle = utf8::decode(bank.planted[p]);
            const auto start = decoded.find(needle);
            CharSpan span(start, start + needle.size());
            hard.push_back(HardLabel{span});
            soft.emplace_back(span, 1.0);
        }
        std::sort(soft.begin(), soft.end(),
                  [](const SoftLabel& a, const SoftLabel& b) { return a.span < b.span; });
        sample.gold_hard = normalize_spans(hard);
        sample.gold_soft = std::move(soft);
        return sample;
    }
    throw std::logic_error(fmt::format("phrase bank '{}' cannot produce a clean sample", lang));
}

}  // namespace

std::vector<std::string> planted_languages() {
    std::vector<std::string> langs;
    for (const auto& [lang, bank] : banks()) langs.push_back(lang);
    return langs;
}

std::vector<Sample> generate_planted_corpus(const PlantedCorpusOptions& options) {
    if (options.n == 0) throw ConfigError("planted corpus needs n >= 1");
    if (options.langs.empty()) throw ConfigError("planted corpus needs at least one language");
    if (!(options.zero_fraction >= 0.0 && options.zero_fraction <= 1.0)) {
        throw ConfigError("zero-hallucination fraction must be in [0, 1]");
    }
    std::vector<const PhraseBank*> selected;
    for (const auto& lang : options.langs) {
        const auto it = banks().find(lang);
        if (it == banks().end()) throw ConfigError(fmt::format("no planted phrase bank for language '{}'", lang));
        selected.push_back(&it->second);
    }

    const auto n_zero = static_cast<std::size_t>(std::llround(options.zero_fraction * static_cast<double>(options.n)));
    Rng rng(options.seed);
    std::vector<bool> zero(options.n, false);
    for (auto i : pick(rng, options.n, n_zero)) zero[i] = true;

    std::vector<Sample> corpus;
    corpus.reserve(options.n);
    for (std::size_t i = 0; i < options.n; ++i) {
        const auto k = i % options.langs.size();
        corpus.push_back(planted_sample(*selected[k], options.langs[k], i, zero[i], options.seed));
    }
    return corpus;
}

std::vector<PlantedSpan> find_planted(const Sample& sample) {
    std::vector<PlantedSpan> found;
    const auto it = banks().find(sample.lang);
    if (it == banks().end()) return found;
    const auto answer = utf8::decode(sample.answer);
    for (const auto& phrase : it->second.planted) {
        const auto needle = utf8::decode(phrase);
        for (auto pos = answer.find(needle); pos != std::u32string::npos; pos = answer.find(needle, pos + 1)) {
            found.push_back({CharSpan(pos, pos + needle.size()), phrase});
        }
    }
    std::sort(found.begin(), found.end(),
              [](const PlantedSpan& a, const PlantedSpan& b) { return a.span < b.span; });
    return found;
}

}  // namespace halluspan::ingest

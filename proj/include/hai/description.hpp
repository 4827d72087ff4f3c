#pragma once

#include "hai/data_model.hpp"
#include "hai/error.hpp"
#include "hai/integrator.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hai {

enum class PromptStyle : std::uint8_t {
    Recommended,   // 20-word contrastive instruction (default)
    Evaluation,    // earlier contrastive instruction, "should not be a single word"
    Short,         // the one-sentence instruction used in the user studies
};

// Pre-instruction for the given style; `contrastive == false` selects the
// inside-only instruction regardless of style. `word_limit` replaces the
// 20-word bound of the recommended instruction.
std::string pre_instruction(PromptStyle style, bool contrastive, std::size_t word_limit = 20);

inline constexpr const char* kPostInstruction = "summary:";

// Inside texts one per line, then (only when `outside` is nonempty) the
// "not in the region" section, then the post-instruction. An empty
// `outside` switches to the inside-only instruction.
std::string build_prompt(std::span<const std::string> inside, std::span<const std::string> outside,
                         PromptStyle style = PromptStyle::Recommended, std::size_t word_limit = 20);

// u.v / (|u||v|); 0 when either vector is zero.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

class LLMClient {
public:
    virtual ~LLMClient() = default;

    std::string complete(const std::string& prompt) {
        ++calls_;
        return do_complete(prompt);
    }

    std::size_t calls() const noexcept { return calls_; }

protected:
    virtual std::string do_complete(const std::string& prompt) = 0;

private:
    std::size_t calls_ = 0;
};

// Returns scripted response t on call t; calls past the end repeat the last.
class ScriptedLLM : public LLMClient {
public:
    explicit ScriptedLLM(std::vector<std::string> responses);

    // JSON object {"0": "...", "1": "..."} or a JSON array.
    static ScriptedLLM from_file(const std::filesystem::path& path);

protected:
    std::string do_complete(const std::string& prompt) override;

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
};

// Offline summarizer: answers with the most frequent token of the inside
// section that never occurs in the outside section (ties -> alphabetical).
class KeywordLLM : public LLMClient {
protected:
    std::string do_complete(const std::string& prompt) override;
};

// Chat-completions style endpoint: POST {model, messages, temperature: 0}.
class HttpLLM : public LLMClient {
public:
    HttpLLM(std::string endpoint, std::string model, std::string token_env = "OPENAI_API_KEY",
            std::chrono::seconds timeout = std::chrono::seconds(60));

protected:
    std::string do_complete(const std::string& prompt) override;

private:
    std::string endpoint_;
    std::string model_;
    std::string token_env_;
    std::chrono::seconds timeout_;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::size_t dim() const = 0;
};

// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(const std::string& text);

// Token counts. With an explicit vocabulary each token owns a coordinate and
// unknown tokens are dropped; otherwise tokens are hashed into `dim` buckets.
class BagOfWordsEmbedder : public TextEmbedder {
public:
    explicit BagOfWordsEmbedder(std::vector<std::string> vocabulary);
    static BagOfWordsEmbedder hashed(std::size_t dim);
    // Sorted vocabulary of every token in `texts`.
    static BagOfWordsEmbedder from_texts(std::span<const std::string> texts);

    std::vector<double> embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }

    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

private:
    BagOfWordsEmbedder() = default;

    std::vector<std::string> vocabulary_;
    std::map<std::string, std::size_t> index_;
    std::size_t dim_ = 0;
};

// Precomputed text -> vector table.
class LookupEmbedder : public TextEmbedder {
public:
    explicit LookupEmbedder(std::map<std::string, std::vector<double>> table);
    static LookupEmbedder from_file(const std::filesystem::path& path);

    std::vector<double> embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }

private:
    std::map<std::string, std::vector<double>> table_;
    std::size_t dim_ = 0;
};

// POST {texts:[...]} -> {vectors:[[...]]}
class HttpEmbedder : public TextEmbedder {
public:
    HttpEmbedder(std::string endpoint, std::size_t dim, std::chrono::seconds timeout = std::chrono::seconds(60));

    std::vector<double> embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }

private:
    std::string endpoint_;
    std::size_t dim_;
    std::chrono::seconds timeout_;
};

struct DescriberConfig {
    std::size_t m = 2;
    std::size_t n_inside = 15;
    std::size_t n_outside = 5;
    std::size_t word_limit = 20;
    bool contrastive = true;   // false: S- stays empty and the inside-only prompt is used
    PromptStyle style = PromptStyle::Recommended;
    std::uint64_t seed = 0;
    int max_retries = 3;
    std::chrono::milliseconds retry_backoff{200};
};

struct CounterexamplePick {
    std::optional<std::size_t> outside;   // s-: most similar non-member
    std::optional<std::size_t> inside;    // s+: least similar member
    double outside_similarity = 0.0;
    double inside_similarity = 0.0;
};

// Indices refer to `embeddings`. Ties keep the lowest index.
CounterexamplePick find_counterexamples(std::span<const double> description_embedding,
                                        std::span<const std::vector<double>> embeddings,
                                        std::span<const std::size_t> members,
                                        std::span<const std::size_t> non_members,
                                        std::span<const std::size_t> excluded_outside,
                                        std::span<const std::size_t> excluded_inside);

struct DescriptionRound {
    std::string prompt;
    std::string response;
    std::optional<std::string> s_minus;   // example ids
    std::optional<std::string> s_plus;
    double s_minus_similarity = 0.0;
    double s_plus_similarity = 0.0;
};

struct DescriptionTrace {
    int region_id = 0;
    std::vector<std::string> initial_inside;    // example ids, sampling order
    std::vector<std::string> initial_outside;
    std::string initial_prompt;
    std::string initial_response;
    std::vector<DescriptionRound> rounds;
    std::size_t llm_calls = 0;
};

nlohmann::json to_json(const DescriptionTrace& trace);

struct DescriptionResult {
    std::string description;
    DescriptionTrace trace;
};

class DescribeError : public BackendError {
public:
    DescribeError(const std::string& what, DescriptionTrace partial)
        : BackendError(what), partial_(std::move(partial)) {}

    const DescriptionTrace& partial_trace() const noexcept { return partial_; }

private:
    DescriptionTrace partial_;
};

DescriptionResult describe_region(const Region& reg, const StudyDataset& ds, const DescriberConfig& cfg,
                                  LLMClient& llm, TextEmbedder& embedder);

} // namespace hai

#pragma once

#include "hai/data_model.hpp"
#include "hai/error.hpp"
#include "hai/integrator.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hai {

// Request that is well formed but illegal in the session's current state
// (double submission, session already finished).
class SessionStateError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NotFoundError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct MetricRow {
    std::string metric;
    double value = 0.0;
};

struct SubgroupRow {
    std::string subgroup;
    double accuracy = 0.0;
};

struct HumanAICard {
    std::string ai_input;
    std::string ai_output;
    std::string training_data_source;
    std::string pretraining_data_source;
    std::string training_objective;
    std::vector<MetricRow> average_ai_performance;
    std::vector<MetricRow> average_human_performance;
    std::vector<SubgroupRow> subgroup_rows;

    // Names of the text fields left empty.
    std::vector<std::string> flags() const;
};

nlohmann::json to_json(const HumanAICard& card);
HumanAICard card_from_json(const nlohmann::json& j);

// Overall accuracies from the dataset and one subgroup row per described region.
HumanAICard default_card(const StudyDataset& ds, std::span<const Region> regions);

struct Lesson {
    int region_id = 0;
    std::string representative;             // example id
    std::vector<std::string> gallery;       // example ids
    Decision decision = 0;
    std::string description;
    double human_accuracy = 0.0;
    double ai_accuracy = 0.0;
};

// One lesson per region, in region order. The representative is drawn among
// members whose optimal decision equals the region decision.
std::vector<Lesson> build_lessons(std::span<const Region> regions, const StudyDataset& ds, std::uint64_t seed,
                                  std::size_t gallery_size = 8);

struct Recommendation {
    Decision decision = 0;
    int region_id = 0;
    std::optional<std::string> description;
    RegionStats stats;
};

// Immutable data shared by every session.
struct OnboardingContext {
    StudyDataset dataset;
    Integrator integrator;
    HumanAICard card;
    JointMatrix joints;

    OnboardingContext(StudyDataset ds, std::vector<Region> regions, HumanAICard card);

    // Integrator-consistent recommendation; nullopt when no region covers v.
    std::optional<Recommendation> recommend(std::span<const double> joint) const;
    std::optional<Recommendation> recommend(const std::string& example_id) const;
    std::optional<Recommendation> recommend(std::span<const double> embedding,
                                            std::span<const double> ai_features) const;
};

struct SessionOptions {
    bool show_recommendations = true;
    std::size_t n_practice = 3;
    std::size_t n_test = 10;
    std::size_t gallery_size = 8;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const SessionOptions& o);
SessionOptions session_options_from_json(const nlohmann::json& j);

enum class Phase : std::uint8_t { Intro, Practice, Teaching, SecondPass, Testing, Done };

std::string to_string(Phase p);

// Seconds since an arbitrary epoch.
using Clock = std::function<double()>;

Clock system_clock();

// Time per item beyond this is not counted in the summary.
inline constexpr double kMaxItemSeconds = 120.0;

struct Submission {
    std::optional<std::string> answer;   // label name; may be absent when used_ai
    bool used_ai = false;
    std::optional<std::uint64_t> item_id;
};

struct LogEntry {
    std::uint64_t item_id = 0;
    Phase phase = Phase::Intro;
    std::optional<std::string> example_id;
    std::optional<int> region_id;
    double served_at = 0.0;
    double answered_at = 0.0;
    std::optional<std::string> answer;   // the final answer after used_ai
    bool used_ai = false;
    std::optional<bool> user_correct;
    std::optional<bool> ai_correct;
    bool recommendation_shown = false;
};

class OnboardingSession {
public:
    OnboardingSession(std::string id, std::shared_ptr<const OnboardingContext> ctx, SessionOptions options,
                      Clock clock = system_clock());

    const std::string& id() const noexcept { return id_; }
    Phase phase() const noexcept { return phase_; }
    const std::vector<Lesson>& lessons() const noexcept { return lessons_; }
    const std::vector<std::size_t>& practice_items() const noexcept { return practice_; }
    const std::vector<std::size_t>& test_items() const noexcept { return tests_; }
    // Lesson indices answered incorrectly on the first pass.
    const std::vector<std::size_t>& second_pass_queue() const noexcept { return second_pass_; }
    const std::vector<LogEntry>& log() const noexcept { return log_; }

    // Payload of the current item. Repeated calls return the same item.
    nlohmann::json next_item();
    nlohmann::json submit_answer(const Submission& s);

    nlohmann::json export_transcript() const;
    // Everything that defines the session's progress; equal states compare equal.
    nlohmann::json state() const;

    // Rebuilds a session by re-applying the transcript's requests.
    static OnboardingSession replay(std::shared_ptr<const OnboardingContext> ctx, const nlohmann::json& transcript);

private:
    struct Pending {
        std::uint64_t item_id = 0;
        double served_at = 0.0;
    };

    std::optional<std::size_t> current_example() const;
    std::optional<std::size_t> current_lesson() const;
    void advance();
    void skip_empty_phases();
    nlohmann::json example_payload(std::size_t idx, bool with_ai) const;

    std::string id_;
    std::shared_ptr<const OnboardingContext> ctx_;
    SessionOptions options_;
    Clock clock_;

    std::vector<Lesson> lessons_;
    std::vector<std::size_t> practice_;
    std::vector<std::size_t> tests_;

    Phase phase_ = Phase::Intro;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> second_pass_;
    std::optional<Pending> pending_;
    std::uint64_t next_item_id_ = 0;
    std::vector<LogEntry> log_;
};

// Summary over answered non-intro items; null fields when there are none.
nlohmann::json transcript_summary(std::span<const LogEntry> log);

// Session registry. Each session is guarded by its own mutex.
class OnboardingService {
public:
    explicit OnboardingService(std::shared_ptr<const OnboardingContext> ctx, Clock clock = system_clock());

    std::string create_session(const SessionOptions& options);
    nlohmann::json next_item(const std::string& id);
    nlohmann::json submit_answer(const std::string& id, const Submission& s);
    nlohmann::json transcript(const std::string& id);
    nlohmann::json state(const std::string& id);

    const OnboardingContext& context() const noexcept { return *ctx_; }

private:
    struct Entry {
        std::mutex mutex;
        std::unique_ptr<OnboardingSession> session;
    };

    std::shared_ptr<Entry> find(const std::string& id);

    std::shared_ptr<const OnboardingContext> ctx_;
    Clock clock_;
    std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t counter_ = 0;
};

} // namespace hai

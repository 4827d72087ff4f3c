#include "hai/onboarding.hpp"

#include "hai/rng.hpp"

#include <algorithm>
#include <chrono>
#include <set>

namespace hai {

using nlohmann::json;

namespace {

constexpr std::uint64_t kLessonStream = 0x6c6573736f6eull;
constexpr std::uint64_t kItemStream = 0x6974656d73ull;

json opt_json(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

json opt_json(const std::optional<bool>& b) { return b ? json(*b) : json(nullptr); }

json metric_rows(const std::vector<MetricRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back({{"metric", r.metric}, {"value", r.value}});
    return arr;
}

std::vector<MetricRow> metric_rows_from(const json& arr) {
    std::vector<MetricRow> out;
    for (const auto& r : arr) out.push_back({r.at("metric").get<std::string>(), r.at("value").get<double>()});
    return out;
}

Phase phase_from_string(const std::string& s) {
    for (auto p : {Phase::Intro, Phase::Practice, Phase::Teaching, Phase::SecondPass, Phase::Testing, Phase::Done}) {
        if (to_string(p) == s) return p;
    }
    throw ParseError("unknown phase '" + s + "'");
}

json entry_to_json(const LogEntry& e) {
    return json{{"item_id", e.item_id},
                {"phase", to_string(e.phase)},
                {"example_id", opt_json(e.example_id)},
                {"region_id", e.region_id ? json(*e.region_id) : json(nullptr)},
                {"served_at", e.served_at},
                {"answered_at", e.answered_at},
                {"answer", opt_json(e.answer)},
                {"used_ai", e.used_ai},
                {"user_correct", opt_json(e.user_correct)},
                {"ai_correct", opt_json(e.ai_correct)},
                {"recommendation_shown", e.recommendation_shown}};
}

bool shows_ai(Phase p) { return p == Phase::Teaching || p == Phase::SecondPass || p == Phase::Testing; }

json rate_summary(const std::vector<const LogEntry*>& entries) {
    std::size_t correct = 0;
    std::size_t with_ai = 0;
    std::size_t relied = 0;
    double seconds = 0.0;
    for (const auto* e : entries) {
        if (e->user_correct.value_or(false)) ++correct;
        if (shows_ai(e->phase)) {
            ++with_ai;
            if (e->used_ai) ++relied;
        }
        seconds += std::clamp(e->answered_at - e->served_at, 0.0, kMaxItemSeconds);
    }
    const double n = static_cast<double>(entries.size());
    json s;
    s["items"] = entries.size();
    s["accuracy"] = entries.empty() ? json(nullptr) : json(static_cast<double>(correct) / n);
    s["ai_reliance"] = with_ai == 0 ? json(nullptr) : json(static_cast<double>(relied) / static_cast<double>(with_ai));
    s["mean_seconds"] = entries.empty() ? json(nullptr) : json(seconds / n);
    return s;
}

} // namespace

std::string to_string(Phase p) {
    switch (p) {
    case Phase::Intro: return "intro";
    case Phase::Practice: return "practice";
    case Phase::Teaching: return "teaching";
    case Phase::SecondPass: return "second_pass";
    case Phase::Testing: return "testing";
    case Phase::Done: return "done";
    }
    return "done";
}

Clock system_clock() {
    return [] {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        return std::chrono::duration<double>(now).count();
    };
}

std::vector<std::string> HumanAICard::flags() const {
    std::vector<std::string> out;
    if (ai_input.empty()) out.emplace_back("ai_input");
    if (ai_output.empty()) out.emplace_back("ai_output");
    if (training_data_source.empty()) out.emplace_back("training_data_source");
    if (pretraining_data_source.empty()) out.emplace_back("pretraining_data_source");
    if (training_objective.empty()) out.emplace_back("training_objective");
    return out;
}

json to_json(const HumanAICard& card) {
    json rows = json::array();
    for (const auto& r : card.subgroup_rows) rows.push_back({{"subgroup", r.subgroup}, {"accuracy", r.accuracy}});
    return json{{"ai_input", card.ai_input},
                {"ai_output", card.ai_output},
                {"training_data_source", card.training_data_source},
                {"pretraining_data_source", card.pretraining_data_source},
                {"training_objective", card.training_objective},
                {"average_ai_performance", metric_rows(card.average_ai_performance)},
                {"average_human_performance", metric_rows(card.average_human_performance)},
                {"subgroup_rows", rows},
                {"flags", card.flags()}};
}

HumanAICard card_from_json(const json& j) {
    static const std::set<std::string> known = {"ai_input",
                                                "ai_output",
                                                "training_data_source",
                                                "pretraining_data_source",
                                                "training_objective",
                                                "average_ai_performance",
                                                "average_human_performance",
                                                "subgroup_rows",
                                                "flags"};
    if (!j.is_object()) throw ParseError("card: expected a JSON object");
    for (const auto& [k, _] : j.items()) {
        if (!known.count(k)) throw ValidationError("card: unknown field '" + k + "'");
    }
    HumanAICard card;
    try {
        card.ai_input = j.value("ai_input", "");
        card.ai_output = j.value("ai_output", "");
        card.training_data_source = j.value("training_data_source", "");
        card.pretraining_data_source = j.value("pretraining_data_source", "");
        card.training_objective = j.value("training_objective", "");
        if (j.contains("average_ai_performance")) card.average_ai_performance = metric_rows_from(j["average_ai_performance"]);
        if (j.contains("average_human_performance")) {
            card.average_human_performance = metric_rows_from(j["average_human_performance"]);
        }
        if (j.contains("subgroup_rows")) {
            for (const auto& r : j["subgroup_rows"]) {
                card.subgroup_rows.push_back({r.at("subgroup").get<std::string>(), r.at("accuracy").get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("card: ") + e.what());
    }
    return card;
}

HumanAICard default_card(const StudyDataset& ds, std::span<const Region> regions) {
    HumanAICard card;
    std::string labels;
    for (const auto& l : ds.manifest.label_vocabulary) labels += (labels.empty() ? "" : ", ") + l;
    card.ai_output = "one of: " + labels;
    if (!ds.empty()) {
        double ai = 0.0;
        double human = 0.0;
        for (const auto& ex : ds.examples) {
            ai += ex.ai_decision == ex.label ? 1.0 : 0.0;
            human += ex.human_prediction == ex.label ? 1.0 : 0.0;
        }
        const double n = static_cast<double>(ds.size());
        card.average_ai_performance.push_back({"accuracy", ai / n});
        card.average_human_performance.push_back({"accuracy", human / n});
    }
    for (const auto& reg : regions) {
        if (!reg.description) continue;
        const auto stats = compute_region_stats(reg, ds);
        card.subgroup_rows.push_back({*reg.description, stats.ai_accuracy});
    }
    return card;
}

std::vector<Lesson> build_lessons(std::span<const Region> regions, const StudyDataset& ds, std::uint64_t seed,
                                  std::size_t gallery_size) {
    const auto points = joint_matrix(ds);
    std::vector<Lesson> out;
    for (const auto& reg : regions) {
        std::vector<std::size_t> members;
        std::vector<std::size_t> qualifying;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (!region_contains(reg, points.row(i))) continue;
            members.push_back(i);
            if (optimal_decision(ds.examples[i], ds.manifest.loss) == reg.decision) qualifying.push_back(i);
        }
        if (qualifying.empty()) {
            throw ValidationError("region " + std::to_string(reg.id) +
                                  " has no member whose optimal decision matches the region decision");
        }
        Rng rng(mix_seed(seed, kLessonStream, static_cast<std::uint64_t>(reg.id)));
        const std::size_t rep = qualifying[static_cast<std::size_t>(rng.below(qualifying.size()))];

        std::vector<std::size_t> others;
        for (auto i : members) {
            if (i != rep) others.push_back(i);
        }
        const auto stats = compute_region_stats(reg, ds);
        Lesson lesson;
        lesson.region_id = reg.id;
        lesson.representative = ds.examples[rep].id;
        for (auto k : rng.sample_indices(others.size(), gallery_size)) lesson.gallery.push_back(ds.examples[others[k]].id);
        lesson.decision = reg.decision;
        lesson.description = reg.description.value_or("");
        lesson.human_accuracy = stats.human_accuracy;
        lesson.ai_accuracy = stats.ai_accuracy;
        out.push_back(std::move(lesson));
    }
    return out;
}

OnboardingContext::OnboardingContext(StudyDataset ds, std::vector<Region> regions, HumanAICard c)
    : dataset(std::move(ds)), card(std::move(c)) {
    dataset.validate();
    for (const auto& reg : regions) {
        reg.validate();
        if (reg.centroid.size() != dataset.manifest.joint_dim()) {
            throw ValidationError("region " + std::to_string(reg.id) + " has dimension " +
                                  std::to_string(reg.centroid.size()) + ", dataset joint dimension is " +
                                  std::to_string(dataset.manifest.joint_dim()));
        }
    }
    integrator.regions = std::move(regions);
    joints = joint_matrix(dataset);
}

std::optional<Recommendation> OnboardingContext::recommend(std::span<const double> joint) const {
    if (joint.size() != dataset.manifest.joint_dim()) {
        throw ValidationError("recommend: vector has dimension " + std::to_string(joint.size()) + ", expected " +
                              std::to_string(dataset.manifest.joint_dim()));
    }
    const auto idx = integrator.deciding_region(joint);
    if (!idx) return std::nullopt;
    const auto& reg = integrator.regions[*idx];
    Recommendation rec;
    rec.decision = integrator.decide(TaskExample{}, joint);
    rec.region_id = reg.id;
    rec.description = reg.description;
    rec.stats = reg.stats;
    return rec;
}

std::optional<Recommendation> OnboardingContext::recommend(const std::string& example_id) const {
    const auto idx = dataset.find(example_id);
    if (!idx) throw NotFoundError("unknown example id '" + example_id + "'");
    return recommend(joints.row(*idx));
}

std::optional<Recommendation> OnboardingContext::recommend(std::span<const double> embedding,
                                                           std::span<const double> ai_features) const {
    if (embedding.size() != dataset.manifest.embedding_dim || ai_features.size() != dataset.manifest.ai_feature_dim) {
        throw ValidationError("recommend: expected embedding of dimension " +
                              std::to_string(dataset.manifest.embedding_dim) + " and ai_features of dimension " +
                              std::to_string(dataset.manifest.ai_feature_dim));
    }
    std::vector<double> joint(embedding.begin(), embedding.end());
    joint.insert(joint.end(), ai_features.begin(), ai_features.end());
    return recommend(joint);
}

json to_json(const SessionOptions& o) {
    return json{{"show_recommendations", o.show_recommendations},
                {"n_practice", o.n_practice},
                {"n_test", o.n_test},
                {"gallery_size", o.gallery_size},
                {"seed", o.seed}};
}

SessionOptions session_options_from_json(const json& j) {
    SessionOptions o;
    if (j.is_null()) return o;
    if (!j.is_object()) throw ValidationError("session options: expected a JSON object");
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "show_recommendations") o.show_recommendations = v.get<bool>();
            else if (k == "n_practice") o.n_practice = v.get<std::size_t>();
            else if (k == "n_test") o.n_test = v.get<std::size_t>();
            else if (k == "gallery_size") o.gallery_size = v.get<std::size_t>();
            else if (k == "seed") o.seed = v.get<std::uint64_t>();
            else throw ValidationError("session options: unknown field '" + k + "'");
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("session options: ") + e.what());
    }
    return o;
}

OnboardingSession::OnboardingSession(std::string id, std::shared_ptr<const OnboardingContext> ctx,
                                     SessionOptions options, Clock clock)
    : id_(std::move(id)), ctx_(std::move(ctx)), options_(options), clock_(std::move(clock)) {
    const auto& ds = ctx_->dataset;
    // Lessons draw from the training split when there is one.
    const auto train = ds.subset(Split::Train);
    lessons_ = build_lessons(ctx_->integrator.regions, train.empty() ? ds : train, options_.seed,
                             options_.gallery_size);

    std::set<std::string> reps;
    for (const auto& l : lessons_) reps.insert(l.representative);
    std::vector<std::size_t> train_pool;
    std::vector<std::size_t> test_pool;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (reps.count(ds.examples[i].id)) continue;
        (ds.examples[i].split == Split::Test ? test_pool : train_pool).push_back(i);
    }
    Rng rng(mix_seed(options_.seed, kItemStream));
    for (auto k : rng.sample_indices(train_pool.size(), options_.n_practice)) practice_.push_back(train_pool[k]);
    if (test_pool.empty()) {
        // No held-out split: draw test items from what practice left over.
        const std::set<std::size_t> used(practice_.begin(), practice_.end());
        for (auto i : train_pool) {
            if (!used.count(i)) test_pool.push_back(i);
        }
    }
    for (auto k : rng.sample_indices(test_pool.size(), options_.n_test)) tests_.push_back(test_pool[k]);
}

std::optional<std::size_t> OnboardingSession::current_lesson() const {
    if (phase_ == Phase::Teaching) return cursor_;
    if (phase_ == Phase::SecondPass) return second_pass_[cursor_];
    return std::nullopt;
}

std::optional<std::size_t> OnboardingSession::current_example() const {
    switch (phase_) {
    case Phase::Practice: return practice_[cursor_];
    case Phase::Teaching:
    case Phase::SecondPass: return ctx_->dataset.find(lessons_[*current_lesson()].representative);
    case Phase::Testing: return tests_[cursor_];
    default: return std::nullopt;
    }
}

void OnboardingSession::skip_empty_phases() {
    for (;;) {
        std::size_t len = 0;
        switch (phase_) {
        case Phase::Intro: return;
        case Phase::Practice: len = practice_.size(); break;
        case Phase::Teaching: len = lessons_.size(); break;
        case Phase::SecondPass: len = second_pass_.size(); break;
        case Phase::Testing: len = tests_.size(); break;
        case Phase::Done: return;
        }
        if (cursor_ < len) return;
        phase_ = static_cast<Phase>(static_cast<int>(phase_) + 1);
        cursor_ = 0;
    }
}

void OnboardingSession::advance() {
    if (phase_ == Phase::Intro) {
        phase_ = Phase::Practice;
        cursor_ = 0;
    } else {
        ++cursor_;
    }
    skip_empty_phases();
}

json OnboardingSession::example_payload(std::size_t idx, bool with_ai) const {
    const auto& ds = ctx_->dataset;
    const auto& ex = ds.examples[idx];
    json e{{"id", ex.id}, {"text", opt_json(ex.text)}, {"metadata", ex.metadata}};
    json p{{"example", e}, {"labels", ds.manifest.label_vocabulary}};
    if (with_ai) {
        p["ai_decision"] = ds.manifest.label_name(ex.ai_decision);
        p["use_ai"] = true;
    }
    return p;
}

json OnboardingSession::next_item() {
    if (phase_ == Phase::Done) throw SessionStateError("session " + id_ + " is done");
    if (!pending_) pending_ = Pending{next_item_id_++, clock_()};

    json p;
    p["v"] = 1;
    p["session_id"] = id_;
    p["item_id"] = pending_->item_id;
    p["phase"] = to_string(phase_);
    if (phase_ == Phase::Intro) {
        p["card"] = to_json(ctx_->card);
        return p;
    }
    const auto idx = *current_example();
    p.update(example_payload(idx, phase_ != Phase::Practice));
    if (const auto li = current_lesson()) {
        p["lesson"] = {{"index", *li}, {"region_id", lessons_[*li].region_id}, {"of", lessons_.size()}};
    }
    if (phase_ == Phase::Testing && options_.show_recommendations) {
        if (const auto rec = ctx_->recommend(ctx_->joints.row(idx))) {
            p["recommendation"] = {{"decision", rec->decision},
                                   {"action", rec->decision ? "use_ai" : "use_own"},
                                   {"region_id", rec->region_id},
                                   {"description", opt_json(rec->description)}};
        }
    }
    return p;
}

json OnboardingSession::submit_answer(const Submission& s) {
    if (phase_ == Phase::Done) throw SessionStateError("session " + id_ + " is done");
    if (!pending_) throw SessionStateError("no item pending in session " + id_);
    if (s.item_id && *s.item_id != pending_->item_id) {
        throw SessionStateError("item " + std::to_string(*s.item_id) + " is not the pending item (" +
                                std::to_string(pending_->item_id) + ")");
    }
    const auto& ds = ctx_->dataset;

    LogEntry e;
    e.item_id = pending_->item_id;
    e.phase = phase_;
    e.served_at = pending_->served_at;
    e.used_ai = s.used_ai;

    json fb;
    fb["v"] = 1;
    fb["session_id"] = id_;
    fb["item_id"] = e.item_id;
    fb["phase"] = to_string(phase_);

    if (phase_ != Phase::Intro) {
        const auto idx = *current_example();
        const auto& ex = ds.examples[idx];
        if (phase_ == Phase::Practice && s.used_ai) throw ValidationError("practice items do not show the AI");
        LabelId answer = 0;
        if (s.used_ai) {
            answer = ex.ai_decision;
        } else {
            if (!s.answer) throw ValidationError("answer is required unless used_ai is set");
            answer = ds.manifest.label_id(*s.answer);
        }
        e.example_id = ex.id;
        e.answer = ds.manifest.label_name(answer);
        e.user_correct = answer == ex.label;
        if (phase_ != Phase::Practice) e.ai_correct = ex.ai_decision == ex.label;
        if (phase_ == Phase::Testing && options_.show_recommendations) {
            e.recommendation_shown = ctx_->recommend(ctx_->joints.row(idx)).has_value();
        }

        fb["user_correct"] = *e.user_correct;
        if (const auto li = current_lesson()) {
            const auto& lesson = lessons_[*li];
            e.region_id = lesson.region_id;
            fb["ai_correct"] = *e.ai_correct;
            fb["reveal"] = {{"region_id", lesson.region_id},
                            {"description", lesson.description},
                            {"decision", lesson.decision},
                            {"action", lesson.decision ? "use_ai" : "use_own"},
                            {"human_accuracy", lesson.human_accuracy},
                            {"ai_accuracy", lesson.ai_accuracy},
                            {"gallery", lesson.gallery}};
            if (phase_ == Phase::Teaching && !*e.user_correct) second_pass_.push_back(*li);
        } else {
            fb["acknowledged"] = true;
        }
    } else {
        fb["acknowledged"] = true;
    }

    e.answered_at = clock_();
    log_.push_back(std::move(e));
    pending_.reset();
    advance();
    fb["next_phase"] = to_string(phase_);
    return fb;
}

json transcript_summary(std::span<const LogEntry> log) {
    std::vector<const LogEntry*> answered;
    std::map<Phase, std::vector<const LogEntry*>> by_phase;
    for (const auto& e : log) {
        if (e.phase == Phase::Intro) continue;
        answered.push_back(&e);
        by_phase[e.phase].push_back(&e);
    }
    json s = rate_summary(answered);
    json phases = json::object();
    for (const auto& [p, entries] : by_phase) phases[to_string(p)] = rate_summary(entries);
    s["by_phase"] = phases;
    return s;
}

json OnboardingSession::export_transcript() const {
    json log = json::array();
    for (const auto& e : log_) log.push_back(entry_to_json(e));
    return json{{"v", 1},
                {"session_id", id_},
                {"options", to_json(options_)},
                {"phase", to_string(phase_)},
                {"pending", pending_ ? json{{"item_id", pending_->item_id}, {"served_at", pending_->served_at}}
                                     : json(nullptr)},
                {"log", log},
                {"summary", transcript_summary(log_)}};
}

json OnboardingSession::state() const {
    auto ids = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::string> out;
        for (auto i : idx) out.push_back(ctx_->dataset.examples[i].id);
        return out;
    };
    std::vector<std::string> reps;
    for (const auto& l : lessons_) reps.push_back(l.representative);
    json log = json::array();
    for (const auto& e : log_) log.push_back(entry_to_json(e));
    return json{{"session_id", id_},
                {"options", to_json(options_)},
                {"phase", to_string(phase_)},
                {"cursor", cursor_},
                {"second_pass", second_pass_},
                {"lessons", reps},
                {"practice", ids(practice_)},
                {"tests", ids(tests_)},
                {"pending", pending_ ? json{{"item_id", pending_->item_id}, {"served_at", pending_->served_at}}
                                     : json(nullptr)},
                {"next_item_id", next_item_id_},
                {"log", log}};
}

OnboardingSession OnboardingSession::replay(std::shared_ptr<const OnboardingContext> ctx, const json& transcript) {
    auto now = std::make_shared<double>(0.0);
    try {
        OnboardingSession s(transcript.at("session_id").get<std::string>(), std::move(ctx),
                            session_options_from_json(transcript.at("options")), [now] { return *now; });
        for (const auto& e : transcript.at("log")) {
            const auto phase = phase_from_string(e.at("phase").get<std::string>());
            if (phase != s.phase_) {
                throw ValidationError("transcript diverges at item " + std::to_string(e.at("item_id").get<std::uint64_t>()));
            }
            *now = e.at("served_at").get<double>();
            s.next_item();
            *now = e.at("answered_at").get<double>();
            Submission sub;
            if (!e.at("answer").is_null()) sub.answer = e.at("answer").get<std::string>();
            sub.used_ai = e.at("used_ai").get<bool>();
            sub.item_id = e.at("item_id").get<std::uint64_t>();
            s.submit_answer(sub);
        }
        if (const auto& p = transcript.at("pending"); !p.is_null()) {
            *now = p.at("served_at").get<double>();
            s.next_item();
        }
        s.clock_ = system_clock();
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("transcript: ") + e.what());
    }
}

OnboardingService::OnboardingService(std::shared_ptr<const OnboardingContext> ctx, Clock clock)
    : ctx_(std::move(ctx)), clock_(std::move(clock)) {}

std::string OnboardingService::create_session(const SessionOptions& options) {
    std::string id;
    {
        std::lock_guard lock(registry_mutex_);
        id = "session-" + std::to_string(++counter_);
    }
    auto entry = std::make_shared<Entry>();
    entry->session = std::make_unique<OnboardingSession>(id, ctx_, options, clock_);
    std::lock_guard lock(registry_mutex_);
    sessions_.emplace(id, std::move(entry));
    return id;
}

std::shared_ptr<OnboardingService::Entry> OnboardingService::find(const std::string& id) {
    std::lock_guard lock(registry_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
}

json OnboardingService::next_item(const std::string& id) {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return entry->session->next_item();
}

json OnboardingService::submit_answer(const std::string& id, const Submission& s) {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return entry->session->submit_answer(s);
}

json OnboardingService::transcript(const std::string& id) {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return entry->session->export_transcript();
}

json OnboardingService::state(const std::string& id) {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return entry->session->state();
}

} // namespace hai

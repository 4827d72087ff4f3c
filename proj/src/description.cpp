#include "hai/description.hpp"

#include "hai/rng.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace hai {

using nlohmann::json;

namespace {

const std::string kRecommendedHead =
    "I will provide you with a set of descriptions of points that belong to a region and a set of descriptions of "
    "points that do not belong to the region. Your task is to summarize the points inside the region in a concise "
    "and precise short sentence while making sure the summary contrasts to points outside the region. Your one "
    "sentence summary should be able to allow a person to distinguish between points inside and outside the region "
    "while describing the region well. The summary should be no more than ";

const std::string kRecommendedTail =
    " words, it should be accurate, concise, distinguishing and precise.\n"
    "\n"
    "Example:\n"
    "\n"
    "inside the region:\n"
    "\n"
    "- two cows and two sheep grazing in a pasture.\n"
    "\n"
    "- the sheep is standing near a tree.\n"
    "\n"
    "outside the region:\n"
    "\n"
    "- the cows are lying on the grass beside the water.\n"
    "\n"
    "summary: The region consists of descriptions that have sheep in them outside in nature, it could have cows but "
    "must have sheep.\n"
    "\n"
    "End of Example";

const std::string kEvaluation =
    "I will provide you with a set of descriptions of points that belong to a region and a set of descriptions of "
    "point that do not belong to the region. Your task is to summarize the points inside the region in a concise and "
    "precise short sentence while making sure the summary contrasts to points outside the region. Your one sentence "
    "summary should be able to allow a person to distinguish between points inside and outside the region while "
    "describing the region well. The summary should not be a single word, it should be accurate, concise, "
    "distinguishing, and precise.\n"
    "\n"
    "Example:\n"
    "\n"
    "Inside the region:\n"
    "\n"
    "- two cows and two sheep grazing in a pasture.\n"
    "\n"
    "- the sheep is standing near a tree.\n"
    "\n"
    "Not in the region:\n"
    "\n"
    "- the cows are lying on the grass beside the water.\n"
    "\n"
    "summary:\n"
    "sheep.\n"
    "\n"
    "End of Example";

const std::string kShort =
    "summarize the points inside the region in a concise and precise short sentence while making sure the summary "
    "contrasts to points outside the region";

const std::string kInsideOnly =
    "I will provide you with a set of descriptions of points that belong to a region.Your task is to summarize the "
    "points inside the region in a concise and precise short sentence .Your one sentence summary should be able to "
    "allow a person to distinguish  points inside the region while describing the region well.The summary should be "
    "a single word, it should be accurate, concise, distinguishing and precise.\n"
    "\n"
    "Example:\n"
    "\n"
    "inside the region:\n"
    "- two cows and two sheep grazing in a pasture.\n"
    "\n"
    "-the sheep is standing near a tree.\n"
    "\n"
    "summary: sheep.\n"
    "\n"
    "End of Example";

const std::string kInsideHeader = "inside the region: \n ";
const std::string kOutsideHeader = ". \n not in the region: \n";

struct Url {
    std::string origin;   // scheme://host[:port]
    std::string path;
};

Url split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ValidationError("endpoint '" + url + "' is not an absolute URL");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

json post_json(const std::string& endpoint, const json& body, const httplib::Headers& headers,
               std::chrono::seconds timeout) {
    const auto url = split_url(endpoint);
    httplib::Client client(url.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError("POST " + endpoint + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw BackendError("POST " + endpoint + " returned HTTP " + std::to_string(res->status));
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw BackendError("POST " + endpoint + " returned invalid JSON: " + e.what());
    }
}

} // namespace

std::string pre_instruction(PromptStyle style, bool contrastive, std::size_t word_limit) {
    if (!contrastive) return kInsideOnly;
    switch (style) {
    case PromptStyle::Recommended: return kRecommendedHead + std::to_string(word_limit) + kRecommendedTail;
    case PromptStyle::Evaluation: return kEvaluation;
    case PromptStyle::Short: return kShort;
    }
    return kRecommendedHead + std::to_string(word_limit) + kRecommendedTail;
}

std::string build_prompt(std::span<const std::string> inside, std::span<const std::string> outside,
                         PromptStyle style, std::size_t word_limit) {
    std::string prompt = pre_instruction(style, !outside.empty(), word_limit) + "\n";
    prompt += kInsideHeader;
    for (const auto& t : inside) prompt += t + ", \n ";
    if (!outside.empty()) {
        prompt += kOutsideHeader;
        for (const auto& t : outside) prompt += t + ",\n";
    }
    prompt += kPostInstruction;
    return prompt;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ValidationError("cosine_similarity: dimensions differ (" + std::to_string(u.size()) + " vs " +
                              std::to_string(v.size()) + ")");
    }
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        dot += u[j] * v[j];
        nu += u[j] * u[j];
        nv += v[j] * v[j];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

ScriptedLLM::ScriptedLLM(std::vector<std::string> responses) : responses_(std::move(responses)) {
    if (responses_.empty()) throw ValidationError("scripted LLM needs at least one response");
}

ScriptedLLM ScriptedLLM::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open LLM script " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("LLM script " + path.string() + ": " + e.what());
    }
    std::vector<std::string> responses;
    if (j.is_array()) {
        responses = j.get<std::vector<std::string>>();
    } else if (j.is_object()) {
        std::map<std::size_t, std::string> by_index;
        for (const auto& [key, value] : j.items()) by_index[std::stoul(key)] = value.get<std::string>();
        for (std::size_t i = 0; i < by_index.size(); ++i) {
            if (!by_index.contains(i)) throw ValidationError("LLM script is missing response " + std::to_string(i));
            responses.push_back(by_index[i]);
        }
    } else {
        throw ValidationError("LLM script must be a JSON array or object");
    }
    return ScriptedLLM(std::move(responses));
}

std::string ScriptedLLM::do_complete(const std::string&) {
    const auto i = std::min(next_, responses_.size() - 1);
    ++next_;
    return responses_[i];
}

std::string KeywordLLM::do_complete(const std::string& prompt) {
    const auto body = prompt.rfind(kInsideHeader);
    if (body == std::string::npos) return "";
    const auto start = body + kInsideHeader.size();
    auto end = prompt.rfind(kPostInstruction);
    if (end == std::string::npos || end < start) end = prompt.size();
    const auto split = prompt.find(kOutsideHeader, start);

    const std::string inside_text = prompt.substr(start, (split == std::string::npos ? end : split) - start);
    const std::string outside_text =
        split == std::string::npos ? "" : prompt.substr(split + kOutsideHeader.size(), end - split - kOutsideHeader.size());

    std::map<std::string, std::size_t> counts;
    for (auto& t : tokenize(inside_text)) ++counts[t];
    std::set<std::string> outside;
    for (auto& t : tokenize(outside_text)) outside.insert(t);

    std::string best;
    std::size_t best_count = 0;
    for (const auto& [token, count] : counts) {
        if (outside.contains(token)) continue;
        if (count > best_count) {
            best = token;
            best_count = count;
        }
    }
    return best;
}

HttpLLM::HttpLLM(std::string endpoint, std::string model, std::string token_env, std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), token_env_(std::move(token_env)), timeout_(timeout) {
    split_url(endpoint_);
}

std::string HttpLLM::do_complete(const std::string& prompt) {
    const json body{{"model", model_},
                    {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                    {"temperature", 0}};
    httplib::Headers headers;
    if (const char* token = std::getenv(token_env_.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const auto reply = post_json(endpoint_, body, headers, timeout_);
    try {
        const auto& choice = reply.at("choices").at(0);
        if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
        return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("LLM reply has no first choice text: ") + e.what());
    }
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cur += static_cast<char>(std::tolower(ch));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

BagOfWordsEmbedder::BagOfWordsEmbedder(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
        if (!index_.emplace(vocabulary_[i], i).second) {
            throw ValidationError("bag-of-words vocabulary has duplicate token '" + vocabulary_[i] + "'");
        }
    }
    dim_ = vocabulary_.size();
    if (dim_ == 0) throw ValidationError("bag-of-words vocabulary is empty");
}

BagOfWordsEmbedder BagOfWordsEmbedder::hashed(std::size_t dim) {
    if (dim == 0) throw ValidationError("hashed bag-of-words needs dim >= 1");
    BagOfWordsEmbedder e;
    e.dim_ = dim;
    return e;
}

BagOfWordsEmbedder BagOfWordsEmbedder::from_texts(std::span<const std::string> texts) {
    std::set<std::string> vocab;
    for (const auto& t : texts) {
        for (auto& tok : tokenize(t)) vocab.insert(std::move(tok));
    }
    return BagOfWordsEmbedder(std::vector<std::string>(vocab.begin(), vocab.end()));
}

std::vector<double> BagOfWordsEmbedder::embed(const std::string& text) {
    std::vector<double> v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
        if (vocabulary_.empty()) {
            std::uint64_t h = 1469598103934665603ull;
            for (unsigned char c : tok) {
                h ^= c;
                h *= 1099511628211ull;
            }
            v[splitmix64(h) % dim_] += 1.0;
        } else if (auto it = index_.find(tok); it != index_.end()) {
            v[it->second] += 1.0;
        }
    }
    return v;
}

LookupEmbedder::LookupEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {
    if (table_.empty()) throw ValidationError("lookup embedder table is empty");
    dim_ = table_.begin()->second.size();
    for (const auto& [text, vec] : table_) {
        if (vec.size() != dim_) throw SchemaError("lookup embedder vectors have inconsistent dimensions");
    }
}

LookupEmbedder LookupEmbedder::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open embedding table " + path.string());
    try {
        return LookupEmbedder(json::parse(in).get<std::map<std::string, std::vector<double>>>());
    } catch (const json::exception& e) {
        throw ParseError("embedding table " + path.string() + ": " + e.what());
    }
}

std::vector<double> LookupEmbedder::embed(const std::string& text) {
    const auto it = table_.find(text);
    if (it == table_.end()) throw BackendError("no precomputed embedding for text '" + text + "'");
    return it->second;
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::size_t dim, std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), dim_(dim), timeout_(timeout) {
    split_url(endpoint_);
}

std::vector<double> HttpEmbedder::embed(const std::string& text) {
    const auto reply = post_json(endpoint_, json{{"texts", json::array({text})}}, {}, timeout_);
    std::vector<double> v;
    try {
        v = reply.at("vectors").at(0).get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("embedder reply has no vector: ") + e.what());
    }
    if (v.size() != dim_) {
        throw BackendError("embedder returned dimension " + std::to_string(v.size()) + ", expected " +
                           std::to_string(dim_));
    }
    return v;
}

CounterexamplePick find_counterexamples(std::span<const double> description_embedding,
                                        std::span<const std::vector<double>> embeddings,
                                        std::span<const std::size_t> members,
                                        std::span<const std::size_t> non_members,
                                        std::span<const std::size_t> excluded_outside,
                                        std::span<const std::size_t> excluded_inside) {
    auto excluded = [](std::span<const std::size_t> set, std::size_t i) {
        return std::find(set.begin(), set.end(), i) != set.end();
    };
    CounterexamplePick pick;
    double best_out = -std::numeric_limits<double>::infinity();
    double best_in = std::numeric_limits<double>::infinity();
    for (auto j : non_members) {
        if (excluded(excluded_outside, j)) continue;
        const double s = cosine_similarity(description_embedding, embeddings[j]);
        if (s > best_out || (s == best_out && j < *pick.outside)) {
            best_out = s;
            pick.outside = j;
        }
    }
    for (auto j : members) {
        if (excluded(excluded_inside, j)) continue;
        const double s = cosine_similarity(description_embedding, embeddings[j]);
        if (s < best_in || (s == best_in && j < *pick.inside)) {
            best_in = s;
            pick.inside = j;
        }
    }
    if (pick.outside) pick.outside_similarity = best_out;
    if (pick.inside) pick.inside_similarity = best_in;
    return pick;
}

json to_json(const DescriptionTrace& trace) {
    json rounds = json::array();
    for (const auto& r : trace.rounds) {
        rounds.push_back({{"prompt", r.prompt},
                          {"response", r.response},
                          {"s_minus", r.s_minus ? json(*r.s_minus) : json(nullptr)},
                          {"s_plus", r.s_plus ? json(*r.s_plus) : json(nullptr)},
                          {"s_minus_similarity", r.s_minus_similarity},
                          {"s_plus_similarity", r.s_plus_similarity}});
    }
    return json{{"region_id", trace.region_id},
                {"initial_inside", trace.initial_inside},
                {"initial_outside", trace.initial_outside},
                {"initial_prompt", trace.initial_prompt},
                {"initial_response", trace.initial_response},
                {"rounds", rounds},
                {"llm_calls", trace.llm_calls}};
}

namespace {

template <typename Fn>
auto with_retry(const DescriberConfig& cfg, const DescriptionTrace& trace, const char* what, Fn&& fn) {
    auto backoff = cfg.retry_backoff;
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const BackendError& e) {
            if (attempt >= cfg.max_retries) {
                throw DescribeError(std::string(what) + " failed after " + std::to_string(attempt + 1) +
                                        " attempts: " + e.what(),
                                    trace);
            }
        }
        if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

} // namespace

DescriptionResult describe_region(const Region& reg, const StudyDataset& ds, const DescriberConfig& cfg,
                                  LLMClient& llm, TextEmbedder& embedder) {
    if (cfg.m > 0 && embedder.dim() != ds.manifest.embedding_dim) {
        throw ValidationError("embedder dimension " + std::to_string(embedder.dim()) +
                              " differs from the dataset embedding dimension " +
                              std::to_string(ds.manifest.embedding_dim));
    }

    std::vector<std::size_t> members;
    std::vector<std::size_t> non_members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& ex = ds.examples[i];
        if (!ex.text) continue;
        (region_contains(reg, joint_vector(ex)) ? members : non_members).push_back(i);
    }
    if (members.empty()) {
        throw ValidationError("region " + std::to_string(reg.id) + " has no member with a text description");
    }

    Rng rng(mix_seed(cfg.seed, 0x64657363ull, static_cast<std::uint64_t>(reg.id)));
    std::vector<std::size_t> inside;
    for (auto k : rng.sample_indices(members.size(), cfg.n_inside)) inside.push_back(members[k]);
    std::vector<std::size_t> outside;
    if (cfg.contrastive) {
        for (auto k : rng.sample_indices(non_members.size(), cfg.n_outside)) outside.push_back(non_members[k]);
    }

    auto texts = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::string> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(*ds.examples[i].text);
        return out;
    };

    DescriptionTrace trace;
    trace.region_id = reg.id;
    for (auto i : inside) trace.initial_inside.push_back(ds.examples[i].id);
    for (auto i : outside) trace.initial_outside.push_back(ds.examples[i].id);
    trace.initial_prompt = build_prompt(texts(inside), texts(outside), cfg.style, cfg.word_limit);
    trace.initial_response = with_retry(cfg, trace, "LLM call", [&] { return llm.complete(trace.initial_prompt); });
    trace.llm_calls = 1;
    std::string description = trace.initial_response;

    std::vector<std::vector<double>> embeddings;
    if (cfg.m > 0) {
        embeddings.reserve(ds.size());
        for (const auto& ex : ds.examples) embeddings.push_back(ex.embedding);
    }

    for (std::size_t round = 1; round <= cfg.m; ++round) {
        DescriptionRound rec;
        const auto e = with_retry(cfg, trace, "embedding call", [&] { return embedder.embed(description); });
        if (e.size() != ds.manifest.embedding_dim) {
            throw ValidationError("embedder returned dimension " + std::to_string(e.size()));
        }
        const std::vector<std::size_t> no_outside;
        const auto pick = find_counterexamples(e, embeddings, members, cfg.contrastive ? non_members : no_outside,
                                               outside, inside);
        if (pick.outside) {
            outside.push_back(*pick.outside);
            rec.s_minus = ds.examples[*pick.outside].id;
            rec.s_minus_similarity = pick.outside_similarity;
        }
        if (pick.inside) {
            inside.push_back(*pick.inside);
            rec.s_plus = ds.examples[*pick.inside].id;
            rec.s_plus_similarity = pick.inside_similarity;
        }
        rec.prompt = build_prompt(texts(inside), texts(outside), cfg.style, cfg.word_limit);
        trace.rounds.push_back(rec);
        auto response = with_retry(cfg, trace, "LLM call", [&] { return llm.complete(rec.prompt); });
        trace.rounds.back().response = response;
        ++trace.llm_calls;
        description = std::move(response);
    }
    return {description, trace};
}

} // namespace hai

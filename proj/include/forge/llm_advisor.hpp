// Optional LLM-backed expansion policy.
//
// Same Advisor interface as the heuristic: the path and global histories
// serialize to JSON, go to an HTTP endpoint (FORGE_LLM_ENDPOINT, optional
// FORGE_LLM_KEY bearer header), and the response is validated against the
// same legality gates as any other proposal. Any network or protocol
// failure falls back to the heuristic policy, so tuning never stalls on a
// flaky endpoint.
//
// Kept out of the core headers so builds without an endpoint never touch
// the HTTP client.

#pragma once

#include <httplib.h>

#include "forge/tuner.hpp"

namespace forge {

class LlmAdvisor final : public Advisor {
  public:
    // endpoint: "http://host:port/path"; empty uses FORGE_LLM_ENDPOINT.
    explicit LlmAdvisor(std::string endpoint = {}, std::string api_key = {})
        : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)) {
        if (endpoint_.empty())
            if (const char* e = std::getenv("FORGE_LLM_ENDPOINT"))
                endpoint_ = e;
        if (api_key_.empty())
            if (const char* k = std::getenv("FORGE_LLM_KEY")) api_key_ = k;
        split_endpoint();
    }

    std::string name() const override { return "llm"; }

    std::size_t select_action(const std::vector<TuningAction>& untried,
                              const std::vector<PathStep>& path,
                              std::mt19937_64& rng) override {
        json req;
        req["task"] = "select_action";
        req["untried"] = untried;
        json hist = json::array();
        for (const auto& st : path)
            hist.push_back({{"action", st.action},
                            {"parent_gflops", st.parent_gflops},
                            {"child_gflops", st.child_gflops}});
        req["path_history"] = hist;

        if (auto resp = post(req)) {
            try {
                auto idx = resp->at("index").get<std::int64_t>();
                if (idx >= 0 && idx < std::int64_t(untried.size()))
                    return std::size_t(idx);
            } catch (const std::exception&) {
            }
        }
        return fallback_.select_action(untried, path, rng);
    }

    std::int64_t space_step(const SearchHistory& history,
                            std::mt19937_64& rng) override {
        json req;
        req["task"] = "space_step";
        json recs = json::array();
        for (const auto& r : history.global_records)
            recs.push_back({{"action", r.action},
                            {"parent_gflops", r.parent_gflops},
                            {"child_gflops", r.child_gflops}});
        req["global_records"] = recs;

        if (auto resp = post(req)) {
            try {
                auto step = resp->at("step").get<std::int64_t>();
                if (step >= 1 && step <= 4096) return step;
            } catch (const std::exception&) {
            }
        }
        return fallback_.space_step(history, rng);
    }

    bool configured() const { return !host_.empty(); }

  private:
    void split_endpoint() {
        // http://host[:port]/path
        std::string rest = endpoint_;
        auto scheme = rest.find("://");
        if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
        auto slash = rest.find('/');
        host_ = slash == std::string::npos ? rest : rest.substr(0, slash);
        path_ = slash == std::string::npos ? "/" : rest.substr(slash);
    }

    std::optional<json> post(const json& body) {
        if (host_.empty()) return std::nullopt;
        try {
            httplib::Client cli(("http://" + host_).c_str());
            cli.set_connection_timeout(2, 0);
            cli.set_read_timeout(5, 0);
            httplib::Headers headers;
            if (!api_key_.empty())
                headers.emplace("Authorization", "Bearer " + api_key_);
            auto r = cli.Post(path_.c_str(), headers, body.dump(),
                              "application/json");
            if (!r || r->status != 200) return std::nullopt;
            return json::parse(r->body);
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    std::string endpoint_, api_key_, host_, path_;
    HeuristicAdvisor fallback_;
};

}  // namespace forge

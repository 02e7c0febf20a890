// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Live providers over HTTP (chat completions for auxiliary attributes,
// an embeddings endpoint for word vectors). Configured through
// TRIDENT_LLM_BASE_URL / TRIDENT_LLM_API_KEY; exponential backoff with base
// 1 s, factor 2, at most 5 tries.

#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "trident/aux_gen.hpp"
#include "trident/embeddings.hpp"
#include "trident/errors.hpp"

namespace trident {

struct HttpProviderConfig {
    std::string base_url;
    std::string api_key;
    std::string model = "gpt-3.5-turbo";
    int max_tries = 5;
    double backoff_base_seconds = 1.0;
    double backoff_factor = 2.0;

    static HttpProviderConfig from_env() {
        HttpProviderConfig cfg;
        if (const char* u = std::getenv("TRIDENT_LLM_BASE_URL")) cfg.base_url = u;
        if (const char* k = std::getenv("TRIDENT_LLM_API_KEY")) cfg.api_key = k;
        if (cfg.base_url.empty())
            throw config_error("live provider needs TRIDENT_LLM_BASE_URL");
        return cfg;
    }
};

namespace detail {

template <class Fn>
auto with_backoff(const HttpProviderConfig& cfg, Fn&& fn) {
    double delay = cfg.backoff_base_seconds;
    std::string last;
    for (int attempt = 1; attempt <= cfg.max_tries; ++attempt) {
        try {
            return fn();
        } catch (const provider_error& e) {
            last = e.what();
            if (attempt == cfg.max_tries) break;
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay *= cfg.backoff_factor;
        }
    }
    throw provider_error("provider failed after " + std::to_string(cfg.max_tries) +
                         " tries: " + last);
}

} // namespace detail

class HttpTextProvider final : public TextProvider {
public:
    explicit HttpTextProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {}

    std::string complete(const std::string& prompt) override {
        count_call();
        return detail::with_backoff(cfg_, [&]() -> std::string {
            httplib::Client client(cfg_.base_url);
            client.set_read_timeout(60, 0);
            nlohmann::json body{{"model", cfg_.model},
                                {"messages", {{{"role", "user"}, {"content", prompt}}}}};
            httplib::Headers headers;
            if (!cfg_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + cfg_.api_key);
            auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                                   "application/json");
            if (!res) throw provider_error("chat completion: no response");
            if (res->status != 200)
                throw provider_error("chat completion: HTTP " + std::to_string(res->status));
            try {
                nlohmann::json j = nlohmann::json::parse(res->body);
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw provider_error(std::string("chat completion: bad payload: ") + e.what());
            }
        });
    }

private:
    HttpProviderConfig cfg_;
};

/// Accepts either {"embedding": [...]} or {"token_embeddings": [[...], ...]};
/// token states are averaged by the importer.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(HttpProviderConfig cfg, int d_m) : cfg_(std::move(cfg)), d_m_(d_m) {}

    Eigen::MatrixXd states(const std::string& word) override {
        return detail::with_backoff(cfg_, [&]() -> Eigen::MatrixXd {
            httplib::Client client(cfg_.base_url);
            client.set_read_timeout(60, 0);
            nlohmann::json body{{"model", cfg_.model}, {"input", word}};
            httplib::Headers headers;
            if (!cfg_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + cfg_.api_key);
            auto res = client.Post("/v1/embeddings", headers, body.dump(), "application/json");
            if (!res) throw provider_error("embeddings: no response");
            if (res->status != 200)
                throw provider_error("embeddings: HTTP " + std::to_string(res->status));
            try {
                nlohmann::json j = nlohmann::json::parse(res->body);
                const nlohmann::json& data = j.at("data").at(0);
                if (data.contains("token_embeddings")) {
                    auto rows = data.at("token_embeddings")
                                    .get<std::vector<std::vector<double>>>();
                    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), d_m_);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                        if (static_cast<int>(rows[i].size()) != d_m_)
                            throw provider_error("embeddings: wrong width");
                        for (int c = 0; c < d_m_; ++c) m(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
                    }
                    return m;
                }
                auto vec = data.at("embedding").get<std::vector<double>>();
                if (static_cast<int>(vec.size()) != d_m_)
                    throw provider_error("embeddings: wrong width");
                Eigen::MatrixXd m(1, d_m_);
                for (int c = 0; c < d_m_; ++c) m(0, c) = vec[static_cast<std::size_t>(c)];
                return m;
            } catch (const nlohmann::json::exception& e) {
                throw provider_error(std::string("embeddings: bad payload: ") + e.what());
            }
        });
    }

    int dim() const override { return d_m_; }

private:
    HttpProviderConfig cfg_;
    int d_m_;
};

} // namespace trident

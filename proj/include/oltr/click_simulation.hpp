#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <string>

#include <json.hpp>

#include "common.hpp"
#include "multileaving.hpp"

namespace oltr {

enum class ClickModelKind { perfect, navigational, informational, custom };

inline std::string to_string(ClickModelKind k) {
    switch (k) {
        case ClickModelKind::perfect: return "perfect";
        case ClickModelKind::navigational: return "navigational";
        case ClickModelKind::informational: return "informational";
        case ClickModelKind::custom: return "custom";
    }
    return "?";
}

inline constexpr int kMaxClickGrade = 4;

/// Cascade click model: per-grade click probability, and per-grade probability of
/// stopping after a click. Grades 0..4.
struct ClickModelParams {
    ClickModelKind kind = ClickModelKind::custom;
    std::array<double, kMaxClickGrade + 1> p_click{};
    std::array<double, kMaxClickGrade + 1> p_stop{};

    bool operator==(const ClickModelParams&) const = default;

    void validate() const {
        for (int g = 0; g <= kMaxClickGrade; ++g)
            if (!(p_click[g] >= 0.0 && p_click[g] <= 1.0 && p_stop[g] >= 0.0 && p_stop[g] <= 1.0))
                throw ValidationError("click model probabilities must lie in [0,1] (grade " + std::to_string(g) + ")");
    }

    static ClickModelParams perfect() {
        return {ClickModelKind::perfect, {0.0, 0.2, 0.4, 0.8, 1.0}, {0.0, 0.0, 0.0, 0.0, 0.0}};
    }
    static ClickModelParams navigational() {
        return {ClickModelKind::navigational, {0.05, 0.3, 0.5, 0.7, 0.95}, {0.2, 0.3, 0.5, 0.7, 0.9}};
    }
    static ClickModelParams informational() {
        return {ClickModelKind::informational, {0.4, 0.6, 0.7, 0.8, 0.9}, {0.1, 0.2, 0.3, 0.4, 0.5}};
    }

    static ClickModelParams by_name(const std::string& name) {
        if (name == "perfect" || name == "perf") return perfect();
        if (name == "navigational" || name == "nav") return navigational();
        if (name == "informational" || name == "inf") return informational();
        throw ValidationError("unknown click model '" + name + "'");
    }
};

/// Top-down cascade: slot i is clicked with p_click[grade]; after a click the
/// user stops with p_stop[grade]. Grades outside 0..4 are clamped and counted in
/// `clamped` when provided.
inline ClickVector simulate_clicks(const ClickModelParams& params, std::span<const int> grades, Rng& rng,
                                   std::size_t* clamped = nullptr) {
    ClickVector clicks(grades.size(), false);
    for (std::size_t i = 0; i < grades.size(); ++i) {
        int g = grades[i];
        if (g < 0 || g > kMaxClickGrade) {
            g = std::clamp(g, 0, kMaxClickGrade);
            if (clamped) ++*clamped;
        }
        if (uniform01(rng) < params.p_click[g]) {
            clicks[i] = true;
            if (uniform01(rng) < params.p_stop[g]) break;
        }
    }
    return clicks;
}

/// Accepts a preset name, or an object {"name"?, "p_click": {"0": p, ...}, "p_stop": {...}}.
/// Grades omitted from an override keep the named preset's value (or 0 without a preset).
inline ClickModelParams click_model_from_json(const nlohmann::json& j) {
    if (j.is_string()) return ClickModelParams::by_name(j.get<std::string>());
    if (!j.is_object()) throw ValidationError("click_model must be a name or an object");
    ClickModelParams p;
    if (j.contains("name")) p = ClickModelParams::by_name(j.at("name").get<std::string>());
    bool overridden = false;
    for (auto [key, target] : {std::pair{"p_click", &p.p_click}, std::pair{"p_stop", &p.p_stop}}) {
        if (!j.contains(key)) continue;
        for (const auto& [grade, value] : j.at(key).items()) {
            int g = -1;
            try {
                g = std::stoi(grade);
            } catch (const std::exception&) {
            }
            if (g < 0 || g > kMaxClickGrade)
                throw ValidationError(std::string("click_model.") + key + " has invalid grade '" + grade + "'");
            (*target)[g] = value.get<double>();
            overridden = true;
        }
    }
    if (overridden) p.kind = ClickModelKind::custom;
    p.validate();
    return p;
}

inline nlohmann::json to_json(const ClickModelParams& p) {
    if (p.kind != ClickModelKind::custom) return to_string(p.kind);
    nlohmann::json j;
    for (int g = 0; g <= kMaxClickGrade; ++g) {
        j["p_click"][std::to_string(g)] = p.p_click[g];
        j["p_stop"][std::to_string(g)] = p.p_stop[g];
    }
    return j;
}

}  // namespace oltr

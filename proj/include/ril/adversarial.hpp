#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "ril/common.hpp"
#include "ril/model.hpp"
#include "ril/tensor.hpp"

namespace ril {

enum class AdvMode { off, single, coupled };

inline const char* to_string(AdvMode m) {
    switch (m) {
        case AdvMode::off: return "off";
        case AdvMode::single: return "single";
        case AdvMode::coupled: return "coupled";
    }
    return "?";
}

inline AdvMode adv_mode_from_string(const std::string& s) {
    if (s == "off") return AdvMode::off;
    if (s == "single") return AdvMode::single;
    if (s == "coupled") return AdvMode::coupled;
    throw ValidationError(format("mode '%s' is not one of off|single|coupled", s.c_str()));
}

struct AdvConfig {
    AdvMode mode = AdvMode::coupled;
    int observed_stage = 0;  // 0 selects the deepest stage
    double d_learning_rate = 2e-3;
    double d_momentum = 0.5;
    double g_weight = 1.0;
    // Literal reading of the written objectives: the student descends the
    // discriminator losses themselves instead of the fooling surrogate.
    // Kept for comparison; the surrogate is the default.
    bool literal_student = false;

    int resolved_stage(int stages) const { return observed_stage == 0 ? stages : observed_stage; }

    void validate(int stages) const {
        if (observed_stage < 0 || observed_stage > stages)
            throw ValidationError(format("observed_stage %d outside [0,%d] (0 = deepest)", observed_stage, stages));
        if (!(d_learning_rate > 0) || !std::isfinite(d_learning_rate))
            throw ValidationError("d_learning_rate must be positive and finite");
        if (d_momentum < 0 || d_momentum >= 1) throw ValidationError("d_momentum must be in [0,1)");
        if (g_weight < 0 || !std::isfinite(g_weight)) throw ValidationError("g_weight must be finite and >= 0");
    }
};

namespace detail {

inline double checked_log_prob(double p, const char* what) {
    if (!(p > 0.0) || !(p < 1.0))
        throw ValidationError(format("%s probability %.9g outside (0,1)", what, p));
    return std::log(p);
}

}  // namespace detail

/// Net-sensitive critic objective: positive class is the teacher's virtual
/// features, negative class the student's virtual features.
inline double d_net_loss(double p_teacher, double p_student_virtual) {
    return -(detail::checked_log_prob(p_teacher, "teacher") +
             detail::checked_log_prob(1.0 - p_student_virtual, "student-virtual complement"));
}

/// Data-sensitive critic objective: positive class is the student's virtual
/// features, negative class its real features.
inline double d_data_loss(double p_student_virtual, double p_student_real) {
    return -(detail::checked_log_prob(p_student_virtual, "student-virtual") +
             detail::checked_log_prob(1.0 - p_student_real, "student-real complement"));
}

/// The student's combined adversarial objective is the plain sum of its
/// per-critic terms.
inline double adv_total(double net_term, double data_term) { return net_term + data_term; }

/// Per-step adversarial bookkeeping: critic losses from the discriminator
/// phase and the student's generator-phase terms.
struct AdvStepResult {
    double d_net = 0.0;
    double d_data = 0.0;
    double g_net = 0.0;
    double g_data = 0.0;
};

/// Owns the discriminators and their optimizer state, and runs the two-phase
/// alternation: (i) update critics on constant features, (ii) compute the
/// student's adversarial gradients with critic parameters frozen.
template <typename T>
struct AdversarialModule {
    AdvConfig cfg;
    Discriminator<T> d_net_disc, d_data_disc, d_single_disc;
    std::unordered_map<std::string, std::vector<T>> velocity;

    void init(const AdvConfig& c, int feature_channels, std::uint64_t seed) {
        cfg = c;
        DiscriminatorSpec spec;
        spec.in_channels = feature_channels;
        if (cfg.mode == AdvMode::coupled) {
            d_net_disc.init(spec, mix_seed(seed, 0x6e6574));
            d_data_disc.init(spec, mix_seed(seed, 0x64617461));
        } else if (cfg.mode == AdvMode::single) {
            d_single_disc.init(spec, mix_seed(seed, 0x73676c));
        }
    }

    /// Mean critic loss over the batch: -(log p_pos + log(1 - p_neg))
    /// averaged over samples, with parameter gradients accumulated into the
    /// critic. Feature inputs are constants in this phase.
    double critic_phase(Discriminator<T>& d, const std::string& tag, const Tensor<T>& pos,
                        const Tensor<T>& neg) {
        typename Discriminator<T>::Cache cpos, cneg;
        Tensor<T> p_pos = d.forward(pos, cpos);
        Tensor<T> p_neg = d.forward(neg, cneg);
        const int n = p_pos.n;
        double loss = 0.0;
        Tensor<T> dpos(n, 1, 1, 1), dneg(n, 1, 1, 1);
        for (int i = 0; i < n; ++i) {
            double pp = p_pos.v[i], pn = p_neg.v[i];
            loss += -(std::log(pp) + std::log(1.0 - pn));
            dpos.v[i] = static_cast<T>(-1.0 / (n * pp));
            dneg.v[i] = static_cast<T>(1.0 / (n * (1.0 - pn)));
        }
        loss /= n;
        if (!std::isfinite(loss))
            throw std::runtime_error(format("critic %s loss is non-finite (p_pos[0]=%.6g, p_neg[0]=%.6g)",
                                            tag.c_str(), static_cast<double>(p_pos.v[0]),
                                            static_cast<double>(p_neg.v[0])));
        d.backward(cpos, dpos, true);
        d.backward(cneg, dneg, true);
        apply_sgd(d, tag);
        d.zero_grad();
        return loss;
    }

    /// Generator-phase term g_weight * mean(-log D(feat)). Accumulates
    /// feature gradients into `g_feat`; critic parameters stay untouched.
    double generator_term(Discriminator<T>& d, const Tensor<T>& feat, Tensor<T>& g_feat) {
        typename Discriminator<T>::Cache cache;
        Tensor<T> p = d.forward(feat, cache);
        const int n = p.n;
        double loss = 0.0;
        Tensor<T> dp(n, 1, 1, 1);
        for (int i = 0; i < n; ++i) {
            loss += -std::log(static_cast<double>(p.v[i]));
            dp.v[i] = static_cast<T>(cfg.g_weight * -1.0 / (n * static_cast<double>(p.v[i])));
        }
        loss = cfg.g_weight * loss / n;
        Tensor<T> gf = d.backward(cache, dp, false);
        g_feat.add_scaled(gf, T(1));
        return loss;
    }

    /// Literal-objective generator term: the student descends the written
    /// critic loss, so gradients push D(neg) toward 0 / keep D(pos) high.
    double generator_term_literal(Discriminator<T>& d, const Tensor<T>& pos, Tensor<T>* g_pos,
                                  const Tensor<T>& neg, Tensor<T>* g_neg) {
        typename Discriminator<T>::Cache cpos, cneg;
        Tensor<T> p_pos = d.forward(pos, cpos);
        Tensor<T> p_neg = d.forward(neg, cneg);
        const int n = p_pos.n;
        double loss = 0.0;
        Tensor<T> dpos(n, 1, 1, 1), dneg(n, 1, 1, 1);
        for (int i = 0; i < n; ++i) {
            loss += -(std::log(static_cast<double>(p_pos.v[i])) + std::log(1.0 - static_cast<double>(p_neg.v[i])));
            dpos.v[i] = static_cast<T>(cfg.g_weight * -1.0 / (n * static_cast<double>(p_pos.v[i])));
            dneg.v[i] = static_cast<T>(cfg.g_weight * 1.0 / (n * (1.0 - static_cast<double>(p_neg.v[i]))));
        }
        loss = cfg.g_weight * loss / n;
        if (g_pos) {
            Tensor<T> gp = d.backward(cpos, dpos, false);
            g_pos->add_scaled(gp, T(1));
        }
        if (g_neg) {
            Tensor<T> gn = d.backward(cneg, dneg, false);
            g_neg->add_scaled(gn, T(1));
        }
        return loss;
    }

    /// One full alternation on the observed-stage features. `g_sv` / `g_sr`
    /// receive the student's adversarial gradients (must be pre-shaped to the
    /// feature dims). `t_feat` is required unless mode=off; `sv_feat` only for
    /// coupled mode.
    AdvStepResult step(const Tensor<T>* t_feat, const Tensor<T>* sv_feat, const Tensor<T>* sr_feat,
                       Tensor<T>* g_sv, Tensor<T>* g_sr) {
        AdvStepResult r;
        if (cfg.mode == AdvMode::off) return r;
        if (cfg.mode == AdvMode::coupled) {
            if (!t_feat || !sv_feat || !sr_feat || !g_sv || !g_sr)
                throw ValidationError("coupled mode needs teacher-virtual, student-virtual and student-real features");
            r.d_net = critic_phase(d_net_disc, "d_net", *t_feat, *sv_feat);
            r.d_data = critic_phase(d_data_disc, "d_data", *sv_feat, *sr_feat);
            if (cfg.literal_student) {
                r.g_net = generator_term_literal(d_net_disc, *t_feat, nullptr, *sv_feat, g_sv);
                r.g_data = generator_term_literal(d_data_disc, *sv_feat, g_sv, *sr_feat, g_sr);
            } else {
                r.g_net = generator_term(d_net_disc, *sv_feat, *g_sv);
                // The data critic pulls real features toward the virtual
                // anchor; the anchor side stays constant in this term.
                r.g_data = generator_term(d_data_disc, *sr_feat, *g_sr);
            }
        } else {
            if (!t_feat || !sr_feat || !g_sr)
                throw ValidationError("single mode needs teacher-virtual and student-real features");
            r.d_net = critic_phase(d_single_disc, "d_single", *t_feat, *sr_feat);
            if (cfg.literal_student)
                r.g_net = generator_term_literal(d_single_disc, *t_feat, nullptr, *sr_feat, g_sr);
            else
                r.g_net = generator_term(d_single_disc, *sr_feat, *g_sr);
        }
        if (!std::isfinite(r.g_net) || !std::isfinite(r.g_data))
            throw std::runtime_error(format("adversarial generator loss non-finite (g_net=%.6g, g_data=%.6g)",
                                            r.g_net, r.g_data));
        return r;
    }

  private:
    void apply_sgd(Discriminator<T>& d, const std::string& tag) {
        d.visit_params([&](const std::string& name, Tensor<T>& p, Tensor<T>* g) {
            if (!g) return;
            auto& vel = velocity[tag + "/" + name];
            vel.resize(p.v.size(), T(0));
            const T mom = static_cast<T>(cfg.d_momentum);
            const T lr = static_cast<T>(cfg.d_learning_rate);
            for (std::size_t i = 0; i < p.v.size(); ++i) {
                vel[i] = mom * vel[i] + g->v[i];
                p.v[i] -= lr * vel[i];
            }
        });
    }
};

}  // namespace ril

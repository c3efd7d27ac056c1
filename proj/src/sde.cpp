#include "mswitch/sde.hpp"

#include "mswitch/error.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>

namespace mswitch {

std::vector<double> PathBatch::times() const {
    std::vector<double> t(n_steps + 1);
    for (std::size_t j = 0; j <= n_steps; ++j) t[j] = time(j);
    return t;
}

EulerStepper::EulerStepper(const DiffusionSpec& diffusion, double dt, std::uint64_t seed)
    : diffusion_(diffusion), dt_(dt), sqrt_dt_(std::sqrt(dt)), rng_(seed, Stream::brownian),
      drift_(static_cast<std::size_t>(diffusion.dim_state())),
      sigma_(static_cast<std::size_t>(diffusion.dim_state() * diffusion.dim_noise())),
      noise_(static_cast<std::size_t>(diffusion.dim_noise())) {}

void EulerStepper::advance(std::span<double> x, std::size_t path, std::size_t step) {
    const int k = diffusion_.dim_state();
    const int d = diffusion_.dim_noise();
    diffusion_.drift(x, drift_);
    diffusion_.sigma(x, sigma_);
    rng_.normals(static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(step), std::span<double>(noise_));
    for (int a = 0; a < k; ++a) {
        double dx = drift_[a] * dt_;
        for (int l = 0; l < d; ++l) dx += sigma_[a * d + l] * noise_[l] * sqrt_dt_;
        x[a] += dx;
    }
}

std::size_t step_count(double dt, double horizon) {
    return static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
}

PathBatch simulate_paths(const DiffusionSpec& diffusion, const Point& x0, double dt, double horizon,
                         std::size_t n_paths, std::uint64_t seed, int threads) {
    if (!(dt > 0.0) || !(horizon >= dt) || n_paths < 1)
        throw Error(ErrorKind::Config, "simulate_paths needs dt > 0, T >= dt and n_paths >= 1");
    if (static_cast<int>(x0.size()) != diffusion.dim_state())
        throw Error(ErrorKind::Config, "x0 dimension does not match the diffusion");

    PathBatch batch;
    batch.n_paths = n_paths;
    batch.n_steps = step_count(dt, horizon);
    batch.dim = diffusion.dim_state();
    batch.dt = dt;
    batch.seed = seed;
    batch.x0 = x0;
    const std::size_t k = x0.size();
    const std::size_t stride = (batch.n_steps + 1) * k;
    batch.states.resize(n_paths * stride);

    auto run = [&](std::size_t begin, std::size_t end) {
        EulerStepper stepper(diffusion, dt, seed);
        std::vector<double> x(k);
        for (std::size_t p = begin; p < end; ++p) {
            double* row = batch.states.data() + p * stride;
            std::copy(x0.begin(), x0.end(), row);
            x = x0;
            for (std::size_t j = 0; j < batch.n_steps; ++j) {
                stepper.advance(x, p, j);
                double norm2 = 0.0;
                for (double v : x) norm2 += v * v;
                if (!std::isfinite(norm2) || norm2 > kExplosionBound * kExplosionBound)
                    throw Error(ErrorKind::NonFiniteState,
                                fmt::format("path {} step {}: |X| exceeded {:g}", p, j + 1, kExplosionBound));
                std::copy(x.begin(), x.end(), row + (j + 1) * k);
            }
        }
    };

    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
    if (workers == 1 || n_paths < 2 * workers) {
        run(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (n_paths + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run(w * chunk, std::min(n_paths, (w + 1) * chunk));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return batch;
}

MomentReport moment_check(const PathBatch& batch, int q, double t, std::optional<double> reference,
                          std::size_t resamples) {
    if (q != 2 && q != 4) throw Error(ErrorKind::Config, "moment_check supports q in {2, 4}");
    const double steps = t / batch.dt;
    const double nearest = std::round(steps);
    if (t < 0.0 || std::abs(steps - nearest) > 1e-9 * std::max(1.0, steps) ||
        nearest > static_cast<double>(batch.n_steps))
        throw Error(ErrorKind::CheckpointOffGrid, fmt::format("t = {} is not on the step grid", t));
    const auto j = static_cast<std::size_t>(nearest);

    std::vector<double> samples(batch.n_paths);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        double norm2 = 0.0;
        for (double v : batch.state(p, j)) norm2 += v * v;
        samples[p] = q == 2 ? norm2 : norm2 * norm2;
    }
    const auto n = static_cast<double>(samples.size());

    MomentReport report;
    report.q = q;
    report.t = t;
    double sum = 0.0;
    for (double s : samples) sum += s;
    report.mean = sum / n;

    CounterRng rng(batch.seed, Stream::bootstrap);
    std::vector<double> means(resamples);
    for (std::size_t b = 0; b < resamples; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < samples.size(); i += 2) {
            const auto [u0, u1] = rng.uniform2(static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(i / 2), 0);
            acc += samples[std::min(samples.size() - 1, static_cast<std::size_t>(u0 * n))];
            if (i + 1 < samples.size())
                acc += samples[std::min(samples.size() - 1, static_cast<std::size_t>(u1 * n))];
        }
        means[b] = acc / n;
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double level) {
        const double pos = level * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(means.size() - 1, lo + 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    report.ci_low = std::min(report.mean, quantile(0.005));
    report.ci_high = std::max(report.mean, quantile(0.995));

    if (reference) {
        report.reference = reference;
        const double slack = 0.05 * std::abs(*reference);
        report.passed = *reference >= report.ci_low - slack && *reference <= report.ci_high + slack;
    }
    return report;
}

void write_paths_csv(std::ostream& out, const PathBatch& batch) {
    out << "path,step,t";
    for (int a = 1; a <= batch.dim; ++a) out << ",x" << a;
    out << '\n';
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        for (std::size_t j = 0; j <= batch.n_steps; ++j) {
            out << p << ',' << j << ',' << fmt::format("{:.17g}", batch.time(j));
            for (double v : batch.state(p, j)) out << ',' << fmt::format("{:.17g}", v);
            out << '\n';
        }
    }
}

} // namespace mswitch

#include "commands.hpp"

#include "iboed/diag/checks.hpp"
#include "iboed/env/trajectory.hpp"
#include "iboed/est/posterior.hpp"
#include "iboed/io/checkpoint.hpp"
#include "iboed/io/config.hpp"
#include "iboed/io/records.hpp"
#include "iboed/nn/tensor.hpp"
#include "iboed/parallel.hpp"
#include "iboed/rl/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

namespace iboed::cli {

namespace fs = std::filesystem;

namespace {

// A usage/config problem detected inside a command (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const UnsupportedCapability& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

// A trainer with networks and counters restored from a checkpoint.
struct Loaded {
  io::RunConfig config;
  std::unique_ptr<sim::Model> model;
  std::unique_ptr<rl::Trainer> trainer;
};

Loaded load_trainer(const fs::path& path) {
  const auto ckpt = io::read_checkpoint(path);
  Loaded l;
  l.config = io::checkpoint_config(ckpt);
  l.model = sim::make_model(l.config.model, l.config.model_options);
  l.trainer = std::make_unique<rl::Trainer>(*l.model, l.config.trainer);
  io::restore(*l.trainer, ckpt);
  return l;
}

void print_row(std::ostream& out, const rl::MetricsRow& r) {
  out << "step=" << r.step << " q_loss=" << r.q_loss << " policy_loss=" << r.policy_loss
      << " critic_loss=" << r.critic_loss;
  if (std::isfinite(r.eval_bound)) out << " eval=" << r.eval_bound << " +- " << r.eval_stderr;
  out << "\n";
}

}  // namespace

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  io::RunConfig config;
  try {
    config = io::load_config(o.config);
    if (o.output_dir) config.output_dir = o.output_dir->string();
    if (o.total_timesteps) config.trainer.total_timesteps = *o.total_timesteps;
    if (o.seed) config.trainer.seed = *o.seed;
    if (o.reward) config.trainer.reward = est::parse_reward_kind(*o.reward);
    io::validate(config);
  } catch (const std::exception& e) {
    err << "invalid config: " << e.what() << "\n";
    return kUsage;
  }

  return guarded(err, [&] {
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    const std::string hash = io::config_hash(config);
    const auto model = sim::make_model(config.model, config.model_options);
    rl::Trainer trainer(*model, config.trainer);

    const fs::path ckpt_path = dir / "checkpoint.bin";
    const fs::path metrics_path = dir / "metrics.csv";
    if (o.resume && fs::exists(ckpt_path)) {
      const auto ckpt = io::read_checkpoint(ckpt_path);
      if (ckpt.text("config_hash") != hash) {
        throw UsageError("cannot resume: " + ckpt_path.string() + " was written with config hash " +
                         ckpt.text("config_hash") + ", current config hashes to " + hash);
      }
      io::restore(trainer, ckpt);
      // Drop metrics rows logged after the checkpoint was taken.
      if (fs::exists(metrics_path)) {
        auto table = io::read_csv(metrics_path);
        std::erase_if(table.rows, [&](const auto& row) { return row[0] > static_cast<double>(trainer.env_steps()); });
        std::ofstream(metrics_path) << io::to_csv(table);
      }
      if (!o.quiet) out << "resumed at step " << trainer.env_steps() << "\n";
    } else {
      fs::remove(metrics_path);
    }
    {
      std::ofstream cfg(dir / "config.toml");
      cfg << "# config_hash=" << hash << "\n" << io::to_toml(config);
    }

    io::MetricsWriter metrics(metrics_path, hash);
    // A checkpoint accompanies every metrics row so an interrupted run can resume.
    trainer.set_hooks(rl::TrainHooks{nullptr, [&](const rl::MetricsRow& row) {
                                       io::write_checkpoint(ckpt_path, io::snapshot(trainer, config));
                                       metrics.append(row);
                                       if (!o.quiet) print_row(out, row);
                                     }});
    try {
      trainer.run();
    } catch (const NumericError& e) {
      const fs::path snap = dir / "abort_snapshot.bin";
      io::write_checkpoint(snap, io::snapshot(trainer, config));
      err << "numeric abort at step " << trainer.env_steps() << ": " << e.what() << "\n"
          << "diagnostic snapshot written to " << snap.string() << "\n";
      return static_cast<int>(kNumericAbort);
    }
    io::write_checkpoint(ckpt_path, io::snapshot(trainer, config));
    if (!o.quiet) out << "wrote " << ckpt_path.string() << " and " << metrics_path.string() << "\n";
    return static_cast<int>(kOk);
  });
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (o.random == o.checkpoint.has_value()) throw UsageError("pass exactly one of --checkpoint or --random");
    io::RunConfig config;
    Loaded loaded;
    std::string source = "random";
    if (o.checkpoint) {
      loaded = load_trainer(*o.checkpoint);
      config = loaded.config;
      source = o.checkpoint->string();
      if (o.config) {
        const auto given = io::load_config(*o.config);
        if (io::config_hash(given) != io::config_hash(config) && !o.force) {
          throw UsageError("config " + o.config->string() + " (hash " + io::config_hash(given) +
                           ") does not match the checkpoint (hash " + io::config_hash(config) +
                           "); pass --force to evaluate anyway");
        }
      }
    } else if (o.config) {
      config = io::load_config(*o.config);
    } else {
      config = io::default_config(o.model.value_or("location_finding"));
    }
    std::unique_ptr<sim::Model> own_model;
    if (!loaded.model) own_model = sim::make_model(config.model, config.model_options);
    const sim::Model& model = loaded.model ? *loaded.model : *own_model;

    const auto kind = o.bound ? est::parse_bound_kind(*o.bound) : config.estimator.bound;
    const int L = o.num_contrastive.value_or(config.estimator.num_contrastive);
    const int n = o.rollouts.value_or(config.estimator.rollouts);
    const std::uint64_t seed = o.seed.value_or(config.trainer.seed);
    if (L < 1) throw UsageError("--L must be >= 1");
    if (n < 2) throw UsageError("--rollouts must be >= 2");
    if (kind != est::BoundKind::InfoNce && !model.has_likelihood()) {
      throw UsageError(std::string(est::to_string(kind)) + " needs an analytic likelihood, which model " +
                       model.name() + " does not provide; use --bound infonce");
    }
    if (kind == est::BoundKind::InfoNce && !loaded.trainer) {
      throw UsageError("infonce needs a trained critic; pass --checkpoint");
    }

    std::unique_ptr<env::DesignPolicy> policy;
    if (loaded.trainer) {
      policy = std::make_unique<rl::NetworkPolicy>(loaded.trainer->agent().actor);
    } else {
      policy = std::make_unique<rl::RandomPolicy>(model.bounds());
    }
    const est::Critic* critic = loaded.trainer ? &loaded.trainer->critic() : nullptr;
    Rng rng = make_rng(seed, 0xE7A1);
    const auto estimate =
        rl::evaluate_policy(*policy, model, critic, kind, L, config.trainer.horizon, n, rng);
    const auto report = io::make_report(estimate, model.name(), source, io::config_hash(config), seed);
    out << nlohmann::json::parse(io::to_json(report)).dump(2) << "\n";
    const fs::path path = o.output.value_or(fs::path(config.output_dir) / "eval.jsonl");
    io::append_report(path, report);
    err << "appended report to " << path.string() << "\n";
    return kOk;
  });
}

int cmd_posterior(const PosteriorOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (o.grid_size < 1) throw UsageError("--grid-size must be >= 1");
    const auto loaded = load_trainer(o.checkpoint);
    const sim::Model& model = *loaded.model;
    const std::uint64_t seed = o.seed.value_or(loaded.config.trainer.seed);
    Rng rng = make_rng(seed, 0x9057);
    Vector theta0;
    if (o.theta0) {
      theta0 = to_vector(*o.theta0);
      if (theta0.size() != model.theta_dim()) {
        throw UsageError("--theta0 needs " + std::to_string(model.theta_dim()) + " values for model " + model.name());
      }
    } else {
      theta0 = model.sample_prior(rng);
    }
    const rl::NetworkPolicy policy(loaded.trainer->agent().actor);
    const History h = env::rollout_at(model, policy, theta0, loaded.config.trainer.horizon, rng(), rng);
    const auto post = est::posterior_estimate(h, loaded.trainer->critic(), model, o.grid_size, rng);

    const fs::path path = o.output.value_or(fs::path(loaded.config.output_dir) / "posterior.csv");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream file(path);
    file << io::to_csv(io::posterior_table(post, theta0, io::config_hash(loaded.config)));
    if (!file) throw std::runtime_error("cannot write " + path.string());

    const Vector mean = post.mean(), lo = post.quantile(0.25), hi = post.quantile(0.75);
    out << "theta0 " << theta0.transpose() << "\n"
        << "mean   " << mean.transpose() << "\n"
        << "q25    " << lo.transpose() << "\n"
        << "q75    " << hi.transpose() << "\n"
        << "weight sum " << post.weights.sum() << ", effective sample size " << post.effective_sample_size() << "\n"
        << "wrote " << path.string() << "\n";
    return kOk;
  });
}

int cmd_diag(const DiagOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const bool all = !o.grad_check && !o.invariants;
    if (o.inject_fault) {
      bool found = false;
      for (int i = 0; i < nn::kNumOps; ++i) {
        if (*o.inject_fault == nn::op_name(static_cast<nn::Op>(i))) {
          nn::testing::set_backward_fault(static_cast<nn::Op>(i));
          found = true;
        }
      }
      if (!found) throw UsageError("unknown op '" + *o.inject_fault + "' for --inject-fault");
      err << "warning: backward rule of '" << *o.inject_fault << "' deliberately corrupted\n";
    }
    std::vector<diag::CheckResult> results;
    if (o.grad_check || all) {
      diag::GradCheckOptions g;
      g.seed = o.seed;
      for (auto& r : diag::gradient_checks(g)) {
        out << diag::format_result(r) << "\n";
        results.push_back(std::move(r));
      }
    }
    if (o.invariants || all) {
      diag::InvariantOptions inv;
      inv.seed = o.seed;
      for (auto& r : diag::invariant_checks(inv)) {
        out << diag::format_result(r) << "\n";
        results.push_back(std::move(r));
      }
    }
    nn::testing::clear_backward_fault();
    std::vector<std::string> failed;
    for (const auto& r : results)
      if (!r.passed) failed.push_back(r.name);
    if (failed.empty()) {
      out << "all " << results.size() << " checks passed\n";
      return kOk;
    }
    err << "failed:";
    for (const auto& f : failed) err << " " << f;
    err << "\n";
    return kPropertyFailure;
  });
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const io::RunConfig config = o.config ? io::load_config(*o.config) : io::default_config(o.model);
    const auto model = sim::make_model(config.model, config.model_options);
    const int T = o.horizon.value_or(config.trainer.horizon);
    if (T < 1) throw UsageError("--horizon must be >= 1");
    if (o.trajectories < 1) throw UsageError("--trajectories must be >= 1");
    if (o.theta && static_cast<int>(o.theta->size()) != model->theta_dim()) {
      throw UsageError("--theta needs " + std::to_string(model->theta_dim()) + " values");
    }
    if (o.design && static_cast<int>(o.design->size()) != model->design_dim()) {
      throw UsageError("--design needs " + std::to_string(model->design_dim()) + " values");
    }
    std::unique_ptr<env::DesignPolicy> policy;
    if (o.design) {
      policy = std::make_unique<env::FixedDesignPolicy>(std::vector<Vector>{to_vector(*o.design)});
    } else {
      policy = std::make_unique<rl::RandomPolicy>(model->bounds());
    }

    io::CsvTable table;
    table.meta["config_hash"] = io::config_hash(config);
    table.meta["model"] = model->name();
    table.header = {"trajectory", "t"};
    for (int j = 0; j < model->theta_dim(); ++j) table.header.push_back("theta_" + std::to_string(j));
    for (int j = 0; j < model->design_dim(); ++j) table.header.push_back("design_" + std::to_string(j));
    for (int j = 0; j < model->obs_dim(); ++j) table.header.push_back("obs_" + std::to_string(j));

    Rng rng = make_rng(o.seed, 0x5171);
    for (int i = 0; i < o.trajectories; ++i) {
      const Vector theta = o.theta ? to_vector(*o.theta) : model->sample_prior(rng);
      const History h = env::rollout_at(*model, *policy, theta, T, rng(), rng);
      for (int t = 0; t < T; ++t) {
        std::vector<double> row{static_cast<double>(i), static_cast<double>(t + 1)};
        for (double v : theta) row.push_back(v);
        for (double v : h.design(t)) row.push_back(v);
        for (double v : h.observation(t)) row.push_back(v);
        table.rows.push_back(std::move(row));
      }
    }
    const std::string text = io::to_csv(table);
    if (o.output) {
      if (o.output->has_parent_path()) fs::create_directories(o.output->parent_path());
      std::ofstream file(*o.output);
      file << text;
      if (!file) throw std::runtime_error("cannot write " + o.output->string());
      err << "wrote " << table.rows.size() << " draws to " << o.output->string() << "\n";
    } else {
      out << text;
    }
    return kOk;
  });
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Amortized sequential experimental design with contrastive-bound rewards"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (overrides IBOED_THREADS)")->check(CLI::PositiveNumber);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "train a design policy and critic");
  t->add_option("config", train.config, "config file")->required();
  t->add_option("--output-dir", train.output_dir, "override output_dir");
  t->add_option("--steps", train.total_timesteps, "override trainer.total_timesteps");
  t->add_option("--seed", train.seed, "override seed");
  t->add_option("--reward", train.reward, "override reward (dense|sparse)");
  t->add_flag("--resume", train.resume, "continue an interrupted run from output_dir/checkpoint.bin");
  t->add_flag("--quiet", train.quiet, "no progress output");

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "estimate an information-gain bound for a policy");
  e->add_option("--checkpoint", eval.checkpoint, "trained checkpoint");
  e->add_flag("--random", eval.random, "evaluate the uniform random-design baseline");
  e->add_option("--config", eval.config, "config file (must match the checkpoint unless --force)");
  e->add_option("--model", eval.model, "model for --random without --config");
  e->add_flag("--force", eval.force, "accept a config that does not match the checkpoint");
  e->add_option("--bound", eval.bound, "spce | snmc | infonce");
  e->add_option("--L", eval.num_contrastive, "contrastive samples");
  e->add_option("--rollouts", eval.rollouts, "evaluation rollouts");
  e->add_option("--seed", eval.seed, "evaluation seed");
  e->add_option("--output", eval.output, "JSON lines file to append the report to");

  PosteriorOptions post;
  auto* p = app.add_subcommand("posterior", "self-normalized posterior from the trained critic");
  p->add_option("--checkpoint", post.checkpoint, "trained checkpoint")->required();
  p->add_option("--theta0", post.theta0, "ground-truth parameters")->delimiter(',');
  p->add_option("--seed", post.seed, "seed (theta0 drawn from the prior when --theta0 is absent)");
  p->add_option("--grid-size", post.grid_size, "prior samples");
  p->add_option("--output", post.output, "CSV path");

  DiagOptions dg;
  auto* d = app.add_subcommand("diag", "gradient and invariant self-checks");
  d->add_flag("--grad-check", dg.grad_check, "finite-difference gradient suite");
  d->add_flag("--invariants", dg.invariants, "estimator invariant suite");
  d->add_option("--inject-fault", dg.inject_fault, "corrupt the backward rule of an op (self-test)");
  d->add_option("--seed", dg.seed, "seed");

  SimulateOptions sim_opts;
  auto* s = app.add_subcommand("simulate", "dump raw simulator draws as CSV");
  s->add_option("--model", sim_opts.model, "model name");
  s->add_option("--config", sim_opts.config, "config file (model block)");
  s->add_option("--theta", sim_opts.theta, "fixed parameters")->delimiter(',');
  s->add_option("--design", sim_opts.design, "fixed design for every step")->delimiter(',');
  s->add_option("--trajectories", sim_opts.trajectories, "number of trajectories");
  s->add_option("--horizon", sim_opts.horizon, "steps per trajectory");
  s->add_option("--seed", sim_opts.seed, "seed");
  s->add_option("--output", sim_opts.output, "CSV path (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err) == 0 ? kOk : kUsage;
  }
  if (threads > 0) set_num_threads(threads);

  if (*t) return cmd_train(train, out, err);
  if (*e) return cmd_eval(eval, out, err);
  if (*p) return cmd_posterior(post, out, err);
  if (*d) return cmd_diag(dg, out, err);
  if (*s) return cmd_simulate(sim_opts, out, err);
  return kUsage;
}

}  // namespace iboed::cli

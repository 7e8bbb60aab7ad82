// bbridge: simulate, fit, score and evaluate Brownian-bridge sequence models.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bbridge/app.hpp"

namespace {

using namespace bbridge;

void add_list_option(CLI::App* cmd, const std::string& name, std::vector<int>& target,
                     const std::string& help) {
  cmd->add_option(name, target, help)->delimiter(',')->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brownian-bridge sequence models: simulation, MLE fitting, BBScore and coherence "
               "evaluation"};
  app.set_version_flag("--version", std::string(kToolName));
  app.set_config("--config", "", "TOML/INI file supplying option defaults");
  app.require_subcommand(1);

  // simulate
  app::SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Write simulated bridge trajectories");
  c_sim->add_option("--d", sim.d, "latent dimension")->capture_default_str();
  c_sim->add_option("--T", sim.horizon, "last time index (T+1 points)")->capture_default_str();
  c_sim->add_option("--T-max", sim.horizon_max, "draw T uniformly from [T, T-max]");
  c_sim->add_option("--n", sim.n, "number of trajectories")->capture_default_str();
  c_sim->add_option("--sigma", sim.sigma, "identity | random-spd:<seed> | sigma model file")
      ->capture_default_str();
  c_sim->add_option("--endpoints", sim.endpoints, "zero | gaussian:<scale>")->capture_default_str();
  c_sim->add_option("--mix", sim.mix, "none | random:<seed> (write A s)")->capture_default_str();
  c_sim->add_option("--mix-inverse-out", sim.mix_inverse_out, "encoder file receiving A^{-1}");
  c_sim->add_option("--domain", sim.domain)->capture_default_str();
  c_sim->add_option("--label", sim.label, "label attached to every record");
  c_sim->add_option("--seed", sim.seed)->capture_default_str();
  c_sim->add_option("--out", sim.out)->required();

  // fit
  app::FitOptions fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a pooled (shrunk) MLE of Sigma");
  c_fit->add_option("--in", fit.in)->required();
  c_fit->add_option("--domain", fit.domain, "only use records of this domain");
  c_fit->add_option("--epsilon", fit.epsilon, "shrinkage toward sigma2 I")->capture_default_str();
  c_fit->add_option("--out", fit.out)->required();
  c_fit->add_option("--truth", fit.truth, "sigma spec to report relative error against");
  std::uint64_t fit_seed = 0;
  c_fit->add_option("--seed", fit_seed, "recorded for reproducibility");

  // score
  app::ScoreOptions sc;
  auto* c_score = app.add_subcommand("score", "Write per-document BBScore records");
  c_score->add_option("--in", sc.in)->required();
  c_score->add_option("--model", sc.model)->required();
  c_score->add_option("--out", sc.out)->required();
  c_score->add_flag("--in-sample", sc.in_sample, "allow scoring the model's own fitting corpus");
  c_score->add_flag("--heuristic", sc.heuristic, "also report the isotropic heuristic score");
  std::uint64_t score_seed = 0;
  c_score->add_option("--seed", score_seed, "recorded for reproducibility");

  // shuffle
  app::ShuffleOptions sh;
  std::string sh_kind = "global";
  auto* c_shuffle = app.add_subcommand("shuffle", "Write shuffled copies of every document");
  c_shuffle->add_option("--in", sh.in)->required();
  c_shuffle->add_option("--out", sh.out)->required();
  c_shuffle->add_option("--kind", sh_kind, "global | local")
      ->check(CLI::IsMember({"global", "local"}))
      ->capture_default_str();
  c_shuffle->add_option("--block-size", sh.spec.block_size)->capture_default_str();
  c_shuffle->add_option("--windows", sh.spec.num_windows)->capture_default_str();
  c_shuffle->add_option("--window-size", sh.spec.window_size)->capture_default_str();
  c_shuffle->add_option("--copies", sh.spec.copies)->capture_default_str();
  c_shuffle->add_option("--seed", sh.spec.seed)->capture_default_str();

  // discriminate
  app::DiscriminateOptions dis;
  bool dis_global_only = false, dis_local_only = false;
  auto* c_dis = app.add_subcommand("discriminate", "Global/local shuffle discrimination table");
  c_dis->add_option("--in", dis.in)->required();
  c_dis->add_option("--model", dis.model)->required();
  c_dis->add_option("--out", dis.out, "optional JSON-lines results");
  add_list_option(c_dis, "--block-sizes", dis.config.block_sizes, "global block sizes");
  add_list_option(c_dis, "--windows", dis.config.windows, "local window counts");
  c_dis->add_option("--window-size", dis.config.window_size)->capture_default_str();
  c_dis->add_option("--copies", dis.config.copies)->capture_default_str();
  c_dis->add_flag("--use-pvalue", dis.config.use_pvalue, "compare p-values instead of raw scores");
  c_dis->add_flag("--per-document", dis.per_document, "average accuracy per document");
  c_dis->add_flag("--global-only", dis_global_only);
  c_dis->add_flag("--local-only", dis_local_only);
  c_dis->add_option("--seed", dis.config.seed)->capture_default_str();

  // relative
  app::RelativeOptions rel;
  auto* c_rel = app.add_subcommand("relative", "Relative accuracy between two document sets");
  c_rel->add_option("--a", rel.a)->required();
  c_rel->add_option("--b", rel.b)->required();
  c_rel->add_option("--model", rel.model)->required();
  c_rel->add_option("--truth", rel.truth, "a-more-coherent | labels")
      ->check(CLI::IsMember({"a-more-coherent", "labels"}))
      ->capture_default_str();
  c_rel->add_option("--labels", rel.labels, "labels from least to most coherent")->delimiter(',');
  c_rel->add_flag("--use-pvalue", rel.use_pvalue);
  c_rel->add_option("--seed", rel.seed)->capture_default_str();

  // classify
  app::ClassifyOptions cls;
  auto* c_cls = app.add_subcommand("classify", "Threshold classification + Spearman correlation");
  c_cls->add_option("--train", cls.train)->required();
  c_cls->add_option("--test", cls.test)->required();
  c_cls->add_option("--model", cls.model)->required();
  c_cls->add_option("--labels", cls.labels, "labels from least to most coherent")
      ->delimiter(',')
      ->capture_default_str();
  c_cls->add_flag("--use-pvalue", cls.use_pvalue);
  c_cls->add_option("--seed", cls.seed)->capture_default_str();

  // compare-domains
  app::CompareOptions cmp;
  auto* c_cmp = app.add_subcommand("compare-domains", "Compare two corpora under swapped models");
  c_cmp->add_option("--a", cmp.a)->required();
  c_cmp->add_option("--b", cmp.b)->required();
  c_cmp->add_option("--model-a", cmp.model_a)->required();
  c_cmp->add_option("--model-b", cmp.model_b)->required();
  c_cmp->add_option("--model-ref", cmp.model_ref);
  c_cmp->add_flag("--matched", cmp.matched, "pair documents with equal ids only");
  c_cmp->add_option("--seed", cmp.seed)->capture_default_str();

  // train
  app::TrainOptions tr;
  bool no_sigma_scalar = false;
  auto* c_train = app.add_subcommand("train", "Train a linear encoder with the bridge NLL");
  c_train->add_option("--in", tr.in, "raw sequences (trajectory file format)")->required();
  c_train->add_option("--d-out", tr.d_out, "output dimension (default: input dimension)");
  c_train->add_option("--init", tr.init, "identity | random:<seed> | encoder file")
      ->capture_default_str();
  c_train->add_option("--init-noise", tr.init_noise)->capture_default_str();
  c_train->add_option("--epochs", tr.config.epochs)->capture_default_str();
  c_train->add_option("--step-size", tr.config.step_size)->capture_default_str();
  c_train->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  c_train->add_option("--epsilon", tr.config.epsilon)->capture_default_str();
  c_train->add_flag("--triplet", tr.config.triplet_mode, "sample one interior triple per sequence");
  c_train->add_flag("--no-sigma-scalar", no_sigma_scalar, "shrink toward I instead of sigma2 I");
  c_train->add_option("--out-encoder", tr.out_encoder);
  c_train->add_option("--out-models", tr.out_models, "prefix for per-domain sigma models");
  c_train->add_option("--truth", tr.truth, "sigma spec to report recovery error against");
  c_train->add_option("--seed", tr.config.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_sim->parsed()) {
      app::simulate(sim, std::cout);
    } else if (c_fit->parsed()) {
      std::cout << "seed=" << fit_seed << '\n';
      app::fit(fit, std::cout);
    } else if (c_score->parsed()) {
      std::cout << "seed=" << score_seed << '\n';
      app::score(sc, std::cout);
    } else if (c_shuffle->parsed()) {
      sh.spec.kind = sh_kind == "global" ? ShuffleSpec::Kind::global_block
                                         : ShuffleSpec::Kind::local_window;
      app::shuffle(sh, std::cout);
    } else if (c_dis->parsed()) {
      if (dis_global_only && dis_local_only) {
        throw ValidationError("--global-only and --local-only are exclusive");
      }
      dis.global = !dis_local_only;
      dis.local = !dis_global_only;
      app::discriminate(dis, std::cout);
    } else if (c_rel->parsed()) {
      app::relative(rel, std::cout);
    } else if (c_cls->parsed()) {
      app::classify(cls, std::cout);
    } else if (c_cmp->parsed()) {
      app::compare_domains(cmp, std::cout);
    } else if (c_train->parsed()) {
      tr.use_sigma_scalar = !no_sigma_scalar;
      app::train_command(tr, std::cout);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

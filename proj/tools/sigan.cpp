// sigan: command-line front end for preprocessing, synthetic data, training,
// generation and evaluation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plot.hpp"
#include "sig/config.hpp"
#include "sig/errors.hpp"
#include "sig/gradsuite.hpp"
#include "sig/synthdata.hpp"
#include "sig/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
};

sig::Config resolve(const Common& c, const std::string& command) {
  sig::Config cfg;
  if (!c.config_file.empty()) cfg.load(c.config_file);
  for (const auto& o : c.overrides) cfg.set(o);
  cfg.apply_env_seed();
  std::cerr << "# sigan " << command << " resolved config\n";
  cfg.dump(std::cerr);
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("-s,--set", c.overrides, "override, key=value (repeatable)");
}

int num_actions(const sig::Config& cfg, const std::string& dict_path) {
  return dict_path.empty() ? cfg.integer("data.actions") : sig::actions::read_dictionary(dict_path).size();
}

std::vector<sig::actions::Interaction> load_data(const std::string& path, int actions) {
  auto data = sig::actions::read_dataset(path, actions);
  if (data.empty()) throw sig::InputError(path + " holds no samples");
  return data;
}

sig::Continuations read_generated(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sig::InputError("cannot open " + path);
  sig::Continuations c;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto obs = j.at("observed").get<std::vector<std::vector<int>>>();
      const auto gen = j.at("generated").get<std::vector<std::vector<int>>>();
      if (obs.size() != gen.size()) throw sig::ParseError(n, path + ": observed/generated person counts differ");
      for (std::size_t p = 0; p < gen.size(); ++p) {
        c.target.push_back(gen[p]);
        auto full = obs[p];
        full.insert(full.end(), gen[p].begin(), gen[p].end());
        c.full.push_back(std::move(full));
      }
    } catch (const json::exception& e) {
      throw sig::ParseError(n, path + ": " + e.what());
    }
  }
  return c;
}

void write_plots(const fs::path& dir, const fs::path& csv) {
  const auto rows = sig::MetricsCsv::read(csv);
  std::vector<double> ep, hm, sf;
  for (const auto& r : rows) {
    ep.push_back(r.epoch);
    hm.push_back(r.h_m);
    sf.push_back(r.sfid);
  }
  sigan::write_line_plot(dir / "h_m.svg", "Marginal entropy of generated actions", "epoch", "H_M (nats)", ep, hm);
  sigan::write_line_plot(dir / "sfid.svg", "Sequential FID", "epoch", "SFID", ep, sf);
}

void print_row(const sig::MetricsRow& r) {
  std::cout << "epoch=" << r.epoch << " h_m=" << r.h_m << " h_c=" << r.h_c << " is=" << r.is << " sfid=" << r.sfid
            << " d_loss=" << r.d_loss << " g_adv=" << r.g_adv << " g_sup=" << r.g_sup << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social interaction GAN: conditional generation of multi-person action sequences"};
  app.require_subcommand(1);

  // preprocess
  Common pre_c;
  std::string pre_in, pre_data, pre_dict;
  auto* pre = app.add_subcommand("preprocess", "annotations -> dictionary + segmented dataset");
  add_common(pre, pre_c);
  pre->add_option("--annotations", pre_in, "raw annotations (JSON lines)")->required()->check(CLI::ExistingFile);
  pre->add_option("--out-data", pre_data, "dataset output (JSON lines)")->required();
  pre->add_option("--out-dict", pre_dict, "dictionary output (JSON)")->required();

  // synth
  Common syn_c;
  std::string syn_out;
  auto* syn = app.add_subcommand("synth", "simulate a coupled-Markov interaction dataset");
  add_common(syn, syn_c);
  syn->add_option("-o,--out", syn_out, "dataset output (JSON lines)")->required();

  // train
  Common tr_c;
  std::string tr_data, tr_dict, tr_out, tr_resume, tr_incep;
  auto* tr = app.add_subcommand("train", "adversarial training");
  add_common(tr, tr_c);
  tr->add_option("--data", tr_data, "training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--dict", tr_dict, "dictionary (sets |A|)")->check(CLI::ExistingFile);
  tr->add_option("-o,--out-dir", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  tr->add_option("--inception", tr_incep, "inception model for SFID rows")->check(CLI::ExistingFile);

  // generate
  Common gen_c;
  std::string gen_ckpt, gen_data, gen_out;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "predict continuations of observed prefixes");
  add_common(gen, gen_c);
  gen->add_option("--checkpoint", gen_ckpt, "GAN checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--data", gen_data, "dataset whose prefixes are continued")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gen_out, "JSON-lines output")->required();
  gen->add_option("--seed", gen_seed, "noise seed");

  // eval
  Common ev_c;
  std::string ev_data, ev_dict, ev_ckpt, ev_generated, ev_incep, ev_csv;
  bool ev_split = false;
  int ev_epoch = 0;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "entropy report and SFID");
  add_common(ev, ev_c);
  ev->add_option("--data", ev_data, "real dataset")->required()->check(CLI::ExistingFile);
  ev->add_option("--dict", ev_dict, "dictionary (sets |A|)")->check(CLI::ExistingFile);
  auto* src_ckpt = ev->add_option("--checkpoint", ev_ckpt, "generate from this GAN checkpoint")->check(CLI::ExistingFile);
  auto* src_gen = ev->add_option("--generated", ev_generated, "JSON lines written by generate")->check(CLI::ExistingFile);
  auto* src_split = ev->add_flag("--split", ev_split, "compare the two halves of the real data");
  src_ckpt->excludes(src_gen)->excludes(src_split);
  src_gen->excludes(src_split);
  ev->add_option("--inception", ev_incep, "inception model; SFID is skipped without it")->check(CLI::ExistingFile);
  ev->add_option("--csv", ev_csv, "metrics CSV to append to");
  ev->add_option("--epoch", ev_epoch, "epoch column value for the CSV row");
  ev->add_option("--seed", ev_seed, "noise seed for --checkpoint");

  // inception-train
  Common in_c;
  std::string in_data, in_dict, in_out;
  auto* inc = app.add_subcommand("inception-train", "fit the auxiliary action-proportion model");
  add_common(inc, in_c);
  inc->add_option("--data", in_data, "dataset of full sequences")->required()->check(CLI::ExistingFile);
  inc->add_option("--dict", in_dict, "dictionary (sets |A|)")->check(CLI::ExistingFile);
  inc->add_option("-o,--out", in_out, "model output")->required();

  // gradcheck
  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of primitives and losses");
  gc->add_option("--seed", gc_seed, "operand seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*pre) {
      const sig::Config cfg = resolve(pre_c, "preprocess");
      auto streams = sig::actions::group_annotations(sig::actions::read_annotations(pre_in));
      const auto masks = sig::actions::visible_masks(streams);
      const auto dict = sig::actions::build_dictionary(masks, cfg.real("preprocess.coverage"));
      const auto seg = sig::actions::segment_annotations(streams, dict, sig::segment_config(cfg));
      sig::actions::write_dictionary(pre_dict, dict);
      sig::actions::write_dataset(fs::path(pre_data), seg.samples);
      std::cout << "streams=" << streams.size() << " windows=" << seg.windows
                << " occlusion_drops=" << seg.occlusion_drops << " samples=" << seg.samples.size()
                << " dictionary_entries=" << dict.entries().size() << " tokens=" << dict.size() << '\n';
    } else if (*syn) {
      const sig::Config cfg = resolve(syn_c, "synth");
      const auto data = sig::synth::simulate(sig::synth_config(cfg), cfg.integer("synth.samples"),
                                             cfg.integer("synth.t_obs"), cfg.integer("synth.horizon"));
      sig::actions::write_dataset(fs::path(syn_out), data);
      const auto rep = sig::metrics::entropy_report(sig::real_sequences(data).target);
      std::cout << "samples=" << data.size() << " h_m=" << rep.h_m << " h_c=" << rep.h_c << " is=" << rep.is << '\n';
    } else if (*tr) {
      const sig::Config cfg = resolve(tr_c, "train");
      const int a = num_actions(cfg, tr_dict);
      auto data = load_data(tr_data, a);
      const int horizon = data.front().horizon;
      fs::create_directories(tr_out);
      {
        std::ofstream rc(fs::path(tr_out) / "resolved.cfg", std::ios::trunc);
        cfg.dump(rc);
      }
      sig::Trainer trainer(sig::generator_config(cfg, a), sig::discriminator_config(cfg, a, horizon),
                           sig::train_config(cfg), std::move(data));
      if (!tr_resume.empty()) trainer.load(tr_resume);
      if (!tr_incep.empty()) {
        trainer.set_inception(std::make_shared<sig::metrics::InceptionModel>(sig::metrics::InceptionModel::load(tr_incep)));
      }
      const fs::path csv_path = fs::path(tr_out) / "metrics.csv";
      sig::MetricsCsv csv(csv_path);
      trainer.train(
          [&](const sig::MetricsRow& r) {
            csv.append(r);
            print_row(r);
          },
          [&](const sig::Trainer& t) {
            t.save(fs::path(tr_out) / ("checkpoint-" + std::to_string(t.epoch()) + ".sigg"));
          });
      trainer.save(fs::path(tr_out) / "checkpoint.sigg");
      if (cfg.flag("train.plots")) write_plots(tr_out, csv_path);
      std::cout << "trained to epoch " << trainer.epoch() << " (" << trainer.step() << " steps)\n";
    } else if (*gen) {
      const sig::Config cfg = resolve(gen_c, "generate");
      sig::Generator g = sig::load_generator(gen_ckpt);
      const auto data = load_data(gen_data, g.config().num_actions);
      const auto c = sig::generate_continuations(g, data, gen_seed);
      std::ofstream out(gen_out, std::ios::trunc);
      if (!out) throw sig::InputError("cannot open " + gen_out + " for writing");
      std::size_t row = 0;
      for (const auto& s : data) {
        json j;
        j["id"] = s.id;
        json obs = json::array(), gv = json::array();
        for (int p = 0; p < s.persons(); ++p, ++row) {
          obs.push_back(std::vector<int>(c.full[row].begin(), c.full[row].begin() + s.t_obs));
          gv.push_back(c.target[row]);
        }
        j["observed"] = std::move(obs);
        j["generated"] = std::move(gv);
        out << j.dump() << '\n';
      }
      std::cout << "wrote " << data.size() << " continuations to " << gen_out << '\n';
    } else if (*ev) {
      const sig::Config cfg = resolve(ev_c, "eval");
      int a = num_actions(cfg, ev_dict);
      std::unique_ptr<sig::Generator> g;
      if (!ev_ckpt.empty()) {
        g = std::make_unique<sig::Generator>(sig::load_generator(ev_ckpt));
        a = g->config().num_actions;
      }
      const auto data = load_data(ev_data, a);
      sig::Continuations real, other;
      if (ev_split) {
        const std::size_t half = data.size() / 2;
        real = sig::real_sequences(std::span(data).first(half));
        other = sig::real_sequences(std::span(data).subspan(half));
      } else if (g) {
        real = sig::real_sequences(data);
        other = sig::generate_continuations(*g, data, ev_seed);
      } else if (!ev_generated.empty()) {
        real = sig::real_sequences(data);
        other = read_generated(ev_generated);
      } else {
        throw sig::ConfigError("eval needs one of --checkpoint, --generated or --split");
      }
      sig::MetricsRow row;
      row.epoch = ev_epoch;
      const auto rep = sig::metrics::entropy_report(other.target);
      const auto ref = sig::metrics::entropy_report(real.target);
      row.h_m = rep.h_m;
      row.h_c = rep.h_c;
      row.is = rep.is;
      row.sfid = row.d_loss = row.g_adv = row.g_sup = std::nan("");
      if (!ev_incep.empty()) {
        auto model = sig::metrics::InceptionModel::load(ev_incep);
        row.sfid = sig::metrics::sfid(real.full, other.full, model);
      }
      std::cout << "reference h_m=" << ref.h_m << " h_c=" << ref.h_c << " is=" << ref.is << '\n';
      std::cout << "evaluated h_m=" << row.h_m << " h_c=" << row.h_c << " is=" << row.is << " sfid=" << row.sfid
                << '\n';
      if (!ev_csv.empty()) sig::MetricsCsv(ev_csv).append(row);
    } else if (*inc) {
      const sig::Config cfg = resolve(in_c, "inception-train");
      const int a = num_actions(cfg, in_dict);
      const auto data = load_data(in_data, a);
      const auto seqs = sig::real_sequences(data).full;
      sig::metrics::InceptionModel model(sig::inception_config(cfg, a), cfg.uint("metrics.seed"));
      const auto rep = sig::metrics::inception_train(model, seqs, sig::inception_train_config(cfg));
      model.save(in_out);
      std::cout << "epochs=" << rep.epochs << " best_val_loss=" << rep.best_val_loss
                << " final_train_loss=" << rep.final_train_loss << '\n';
    } else if (*gc) {
      bool ok = true;
      auto show = [&](const std::vector<sig::GradSuiteEntry>& entries) {
        for (const auto& e : entries) {
          const bool pass = e.report.max_rel_error < sig::kGradTolerance;
          ok = ok && pass;
          std::cout << (pass ? "ok   " : "FAIL ") << e.name << " max_rel_error=" << e.report.max_rel_error
                    << " coords=" << e.report.coords_checked << " worst=" << e.report.worst_param << '\n';
        }
      };
      show(sig::primitive_grad_suite(gc_seed));
      show(sig::loss_grad_suite(gc_seed));
      return ok ? 0 : 2;
    }
  } catch (const sig::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const sig::GradError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const sig::GenError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const sig::DiscError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const sig::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Command line front end: extract features, train, generate, compare rhythm
// representations, synthesize paired test clips, and run diagnostics.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "v2m/pipeline.hpp"
#include "v2m/selfcheck.hpp"

namespace {

// explicit flags beat V2M_SEED, V2M_SEED beats the built-in default
uint64_t default_seed(uint64_t fallback) {
  const char* s = std::getenv("V2M_SEED");
  if (!s || !*s) return fallback;
  return std::strtoull(s, nullptr, 10);
}

void apply_env_seed(v2m::Config& cfg) {
  const char* s = std::getenv("V2M_SEED");
  if (s && *s && !cfg.has("seed")) cfg.set("seed", s);
}

void print_summary(const v2m::CheckSummary& s, const char* label) {
  std::printf("%s: %zu checks, max err %.3e\n", label, s.results.size(), s.max_err);
  if (!s.all_ok) throw std::runtime_error(std::string(label) + " failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video-conditioned music generation toolkit"};
  app.require_subcommand(1);

  std::string frames_dir, audio_path, out_path, repr = "odf";
  std::string config_path, data_dir, ckpt_path, csv_path, resume_path, report_path;
  int semantic_dim = v2m::kSemanticDim;
  int steps = 50;
  double guidance = 3.0;
  uint64_t seed = default_seed(1234);
  int seconds = 8, events = 3, clips = 1;

  CLI::App* extract = app.add_subcommand("extract", "compute features for one clip");
  extract->add_option("--frames", frames_dir, "directory of PPM frames, one per second")->required();
  extract->add_option("--audio", audio_path, "mono 16-bit WAV at 44.1 kHz")->required();
  extract->add_option("--repr", repr, "rhythm representation: odf, mel or tempogram");
  extract->add_option("--out", out_path, "output feature file")->required();
  extract->add_option("--semantic-dim", semantic_dim, "semantic embedding width");
  extract->add_option("--seed", seed, "seed for the semantic projection");

  CLI::App* train = app.add_subcommand("train", "train on a directory of clips");
  train->add_option("--config", config_path, "key=value training config")->required();
  train->add_option("--data", data_dir, "directory of clip subdirectories")->required();
  train->add_option("--ckpt", ckpt_path, "checkpoint output path")->required();
  train->add_option("--csv", csv_path, "per-epoch loss table");
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  CLI::App* generate = app.add_subcommand("generate", "sample music for a clip");
  generate->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  generate->add_option("--frames", frames_dir, "directory of PPM frames")->required();
  generate->add_option("--out", out_path, "output WAV path")->required();
  generate->add_option("--steps", steps, "sampling steps");
  generate->add_option("--guidance", guidance, "guidance scale");
  generate->add_option("--seed", seed, "sampling seed");
  generate->add_option("--report", report_path, "write a key=value report here");

  CLI::App* compare = app.add_subcommand(
      "compare-rhythm", "train one model per rhythm representation");
  compare->add_option("--config", config_path, "key=value training config")->required();
  compare->add_option("--data", data_dir, "directory with at least 10 clips")->required();
  compare->add_option("--out", out_path, "comparison CSV path")->required();

  CLI::App* synth = app.add_subcommand("synth", "write synthetic paired clips");
  synth->add_option("--out", out_path, "dataset directory to fill")->required();
  synth->add_option("--seconds", seconds, "clip length in whole seconds");
  synth->add_option("--events", events, "number of cut/click seconds");
  synth->add_option("--clips", clips, "how many clips to write");
  synth->add_option("--seed", seed, "base seed, advanced once per clip");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient battery");
  CLI::App* selftest = app.add_subcommand("selftest", "gradient battery plus numeric identities");

  try {
    app.parse(argc, argv);

    if (extract->parsed()) {
      v2m::FeatureFile ff = v2m::extract_features(
          frames_dir, audio_path, v2m::rhythm_kind_from_name(repr), semantic_dim, seed);
      v2m::write_feature_file(out_path, ff);
      std::printf("wrote %s (%d seconds)\n", out_path.c_str(),
                  ff.require("semantic").shape.at(0));
    } else if (train->parsed()) {
      v2m::Config cfg = v2m::load_config(config_path);
      apply_env_seed(cfg);
      v2m::TrainResult res =
          v2m::run_training(cfg, data_dir, ckpt_path, csv_path, resume_path);
      if (res.rows.empty()) {
        std::printf("nothing to train: checkpoint already covers the requested epochs\n");
      } else {
        const v2m::EpochRow& last = res.rows.back();
        std::printf("trained %zu epochs on %d clips (%llu steps)\n",
                    res.rows.size(), res.clips,
                    static_cast<unsigned long long>(res.steps));
        std::printf("final ldm_loss %.6f predictor_loss %.6f p_pred %.3f\n",
                    last.ldm_loss, last.pred_loss, last.p_predicted);
      }
      std::printf("checkpoint: %s\n", ckpt_path.c_str());
    } else if (generate->parsed()) {
      v2m::GenerateReport rep = v2m::run_generate(
          ckpt_path, frames_dir, out_path, steps, guidance, seed, report_path);
      std::printf("wrote %s (%d seconds, %d latent frames)\n",
                  rep.wav_path.c_str(), rep.seconds, rep.latent_frames);
      std::printf("align_score %.6f\n", rep.align_score);
    } else if (compare->parsed()) {
      v2m::Config cfg = v2m::load_config(config_path);
      apply_env_seed(cfg);
      v2m::run_compare(cfg, data_dir, out_path);
      std::printf("wrote %s\n", out_path.c_str());
    } else if (synth->parsed()) {
      namespace fs = std::filesystem;
      for (int i = 0; i < clips; ++i) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "clip_%03d", i);
        v2m::SyntheticPair pair =
            v2m::generate_synthetic_pair(seconds, events, seed + i);
        v2m::write_synthetic_clip(pair, (fs::path(out_path) / sub).string());
        std::printf("wrote %s/%s (events:", out_path.c_str(), sub);
        for (int e : pair.events) std::printf(" %d", e);
        std::printf(")\n");
      }
    } else if (gradcheck->parsed()) {
      print_summary(v2m::gradient_battery(true), "gradient battery");
    } else if (selftest->parsed()) {
      v2m::CheckSummary g = v2m::gradient_battery(true);
      v2m::CheckSummary n = v2m::self_test(true);
      print_summary(g, "gradient battery");
      print_summary(n, "self test");
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    nlohmann::json j;
    j["error"] = e.what();
    std::cerr << j.dump() << std::endl;
    return 1;
  }
  return 0;
}

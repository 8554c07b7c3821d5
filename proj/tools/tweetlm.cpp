// Command-line entry point wiring the pipeline end to end:
//   corpus -> tokenizer -> pretrain -> finetune / embed / profile / project
// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>

#include "tweetlm/corpus.hpp"
#include "tweetlm/embed.hpp"
#include "tweetlm/errors.hpp"
#include "tweetlm/finetune.hpp"
#include "tweetlm/io.hpp"
#include "tweetlm/mlm.hpp"
#include "tweetlm/model.hpp"
#include "tweetlm/optim.hpp"
#include "tweetlm/project.hpp"
#include "tweetlm/runconfig.hpp"
#include "tweetlm/tokenizer.hpp"

using namespace tweetlm;
using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// run.json lands in the artifact directory, or next to single-file outputs.
void record_run(const std::string& out_path, bool is_dir, const json& config, uint64_t seed) {
  if (is_dir) {
    io::write_run_json(out_path, config, seed);
  } else {
    const auto dir = std::filesystem::path(out_path).parent_path();
    json wrapped = config;
    const std::string name = std::filesystem::path(out_path).filename().string() + ".run.json";
    std::ofstream f(dir.empty() ? name : (dir / name).string());
    json run;
    run["version"] = io::kToolVersion;
    run["seed"] = seed;
    run["config"] = wrapped;
    f << run.dump(2) << '\n';
  }
}

struct LoadedModel {
  model::EncoderConfig cfg;
  model::ModelParams<float> params;
  json extra;
};

LoadedModel load_model(const std::string& ckpt_dir) {
  const io::LoadedCheckpoint ckpt = io::load_checkpoint(ckpt_dir);
  LoadedModel m{ckpt.config, model::ModelParams<float>::init(ckpt.config, 0), ckpt.extra};
  auto refs = model::encoder_param_refs(m.params);
  io::fill_from_checkpoint(ckpt, refs);
  return m;
}

json metrics_json(const finetune::RunSummary& summary,
                  const std::vector<std::string>& label_names) {
  json per_runs = json::array();
  std::vector<double> mean_class_f1;
  for (const auto& run : summary.runs) {
    per_runs.push_back({{"accuracy", run.accuracy},
                        {"macro_f1", run.macro_f1},
                        {"per_class_f1", run.per_class_f1},
                        {"absent_classes", run.absent_classes}});
    if (mean_class_f1.empty()) mean_class_f1.resize(run.per_class_f1.size(), 0.0);
    for (size_t c = 0; c < run.per_class_f1.size(); ++c) {
      mean_class_f1[c] += run.per_class_f1[c] / static_cast<double>(summary.runs.size());
    }
  }
  return json{{"accuracy", summary.mean_accuracy},
              {"accuracy_std", summary.std_accuracy},
              {"macro_f1", summary.mean_macro_f1},
              {"macro_f1_std", summary.std_macro_f1},
              {"per_class_f1", mean_class_f1},
              {"runs", per_runs},
              {"labels", label_names}};
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tweetlm: tweet-scale masked language modeling pipeline"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ---- corpus ----
  auto* corpus_cmd = app.add_subcommand("corpus", "corpus ingestion");
  corpus_cmd->require_subcommand(1);
  {
    auto* filter = corpus_cmd->add_subcommand("filter", "select and normalize tweets");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto lang = std::make_shared<std::string>("es");
    auto fields = std::make_shared<corpus::FieldMap>();
    filter->add_option("--in", *in, "JSON-lines input")->required();
    filter->add_option("--out", *out, "output corpus file (one text per line)")->required();
    filter->add_option("--lang", *lang, "language tag to keep (default es)");
    filter->add_option("--field-id", fields->id, "JSON key for the tweet id");
    filter->add_option("--field-text", fields->text, "JSON key for the text");
    filter->add_option("--field-lang", fields->lang, "JSON key for the language");
    filter->callback([=, &action] {
      action = [=] {
        const auto stats = corpus::filter_file(*in, *out, *lang, *fields);
        record_run(*out, false,
                   json{{"command", "corpus filter"},
                        {"in", *in},
                        {"out", *out},
                        {"lang", *lang}},
                   0);
        std::cout << "read " << stats.lines << " records, kept " << stats.kept << "\n";
      };
    });
  }

  // ---- tokenizer ----
  auto* tok_cmd = app.add_subcommand("tokenizer", "byte-pair tokenizer");
  tok_cmd->require_subcommand(1);
  {
    auto* train = tok_cmd->add_subcommand("train", "train a BPE vocabulary");
    auto corpus_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto vocab_size = std::make_shared<int64_t>(30000);
    auto min_freq = std::make_shared<int64_t>(2);
    train->add_option("--corpus", *corpus_path, "corpus file")->required();
    train->add_option("--vocab-size", *vocab_size, "target vocabulary size (default 30000)");
    train->add_option("--min-frequency", *min_freq, "minimum pair frequency (default 2)");
    train->add_option("--out", *out, "output directory")->required();
    train->callback([=, &action] {
      action = [=] {
        const auto lines = read_lines(*corpus_path);
        const auto vocab = bpe::Vocabulary::train(lines, *vocab_size, *min_freq);
        vocab.save(*out);
        record_run(*out, true,
                   json{{"command", "tokenizer train"},
                        {"corpus", *corpus_path},
                        {"vocab_size", *vocab_size},
                        {"min_frequency", *min_freq}},
                   0);
        std::cout << "trained vocabulary of " << vocab.size() << " tokens, "
                  << vocab.merges().size() << " merges\n";
      };
    });
  }

  // ---- pretrain ----
  {
    auto* pre = app.add_subcommand("pretrain", "masked language model pre-training");
    auto corpus_path = std::make_shared<std::string>();
    auto vocab_dir = std::make_shared<std::string>();
    auto config_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto steps = std::make_shared<int64_t>(-1);
    auto micro_batch = std::make_shared<int64_t>(8);
    auto accum = std::make_shared<int64_t>(1);
    auto seed = std::make_shared<uint64_t>(0);
    auto ckpt_interval = std::make_shared<int64_t>(1000);
    pre->add_option("--corpus", *corpus_path, "corpus file")->required();
    pre->add_option("--vocab", *vocab_dir, "vocabulary directory")->required();
    pre->add_option("--config", *config_path, "run config JSON");
    pre->add_option("--out", *out, "output directory")->required();
    pre->add_option("--steps", *steps, "override scheduler total_steps");
    pre->add_option("--micro-batch", *micro_batch, "sequences per micro-batch (default 8)");
    pre->add_option("--accum", *accum, "gradient accumulation factor (default 1)");
    pre->add_option("--seed", *seed, "global seed");
    pre->add_option("--checkpoint-interval", *ckpt_interval,
                    "steps between checkpoints (default 1000)");
    pre->callback([=, &action] {
      action = [=] {
        RunConfig cfg = config_path->empty() ? RunConfig{} : RunConfig::load(*config_path);
        if (*seed != 0) cfg.seed = *seed;
        const auto vocab = bpe::Vocabulary::load(*vocab_dir);
        cfg.encoder.vocab_size = vocab.size();
        if (*steps >= 0) cfg.scheduler.total_steps = *steps;
        cfg.masking.seed = cfg.seed;

        optim::PretrainOptions opts;
        opts.micro_batch = *micro_batch;
        opts.accum = *accum;
        opts.total_steps = cfg.scheduler.total_steps;
        opts.checkpoint_interval = *ckpt_interval;
        opts.seed = cfg.seed;
        opts.out_dir = *out;

        auto params = model::ModelParams<float>::init(cfg.encoder, cfg.seed);
        record_run(*out, true, cfg.to_json(), cfg.seed);
        const auto result = optim::pretrain<float>(read_lines(*corpus_path), vocab, cfg.encoder,
                                                   cfg.masking, cfg.scheduler, cfg.adam, opts,
                                                   params);
        std::cout << "pre-trained " << result.losses.size() << " steps; checkpoint at "
                  << result.checkpoint_dir << "\n";
        if (!result.losses.empty()) {
          std::cout << "first loss " << result.losses.front() << ", last loss "
                    << result.losses.back() << "\n";
        }
      };
    });
  }

  // ---- finetune ----
  {
    auto* ft = app.add_subcommand("finetune", "supervised fine-tuning");
    ft->require_subcommand(1);
    for (const bool token_level : {false, true}) {
      auto* sub = ft->add_subcommand(token_level ? "tok" : "seq",
                                     token_level ? "token classification (CoNLL input)"
                                                 : "sequence classification (CSV input)");
      auto data = std::make_shared<std::string>();
      auto ckpt = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto config_path = std::make_shared<std::string>();
      auto runs = std::make_shared<int64_t>(10);
      auto lr = std::make_shared<double>(token_level ? 5e-5 : 2e-5);
      auto epochs = std::make_shared<int64_t>(token_level ? 10 : 3);
      auto batch = std::make_shared<int64_t>(8);
      auto seed = std::make_shared<uint64_t>(0);
      auto no_weights = std::make_shared<bool>(false);
      sub->add_option("--data", *data, "labeled dataset")->required();
      sub->add_option("--ckpt", *ckpt, "base checkpoint directory")->required();
      sub->add_option("--out", *out, "output directory")->required();
      sub->add_option("--config", *config_path, "run config JSON");
      sub->add_option("--runs", *runs, "repeated runs over head seeds (default 10)");
      sub->add_option("--lr", *lr, "learning rate");
      sub->add_option("--epochs", *epochs, "training epochs");
      sub->add_option("--batch-size", *batch, "batch size (default 8)");
      sub->add_option("--seed", *seed, "global seed");
      sub->add_flag("--no-class-weights", *no_weights, "disable class weighting");
      sub->callback([=, &action, sub] {
        action = [=] {
          finetune::FinetuneConfig fcfg;
          fcfg.lr = *lr;
          fcfg.epochs = *epochs;
          if (!config_path->empty()) {
            fcfg = RunConfig::load(*config_path).finetune;
            // explicit flags override file values
            if (sub->count("--lr")) fcfg.lr = *lr;
            if (sub->count("--epochs")) fcfg.epochs = *epochs;
            if (sub->count("--batch-size")) fcfg.batch_size = *batch;
          } else {
            fcfg.batch_size = *batch;
          }
          fcfg.seed = *seed;
          fcfg.head_seed = *seed;
          if (*no_weights) fcfg.use_class_weights = false;

          const LoadedModel m = load_model(*ckpt);
          std::filesystem::create_directories(*out);
          finetune::RunSummary summary;
          std::vector<std::string> labels;
          if (token_level) {
            const auto ds = finetune::load_token_conll(*data);
            labels = ds.label_names;
            summary = finetune::run_repeated_token(ds.items, bpe::Vocabulary::load(*ckpt),
                                                   m.params, m.cfg,
                                                   static_cast<int64_t>(labels.size()), fcfg,
                                                   *runs);
          } else {
            const auto ds = finetune::load_sequence_csv(*data);
            labels = ds.label_names;
            summary = finetune::run_repeated_sequence(ds.items, bpe::Vocabulary::load(*ckpt),
                                                      m.params, m.cfg,
                                                      static_cast<int64_t>(labels.size()), fcfg,
                                                      *runs);
          }
          write_json_file(*out + "/metrics.json", metrics_json(summary, labels));
          record_run(*out, true,
                     json{{"command", token_level ? "finetune tok" : "finetune seq"},
                          {"data", *data},
                          {"ckpt", *ckpt},
                          {"runs", *runs},
                          {"lr", fcfg.lr},
                          {"epochs", fcfg.epochs},
                          {"batch_size", fcfg.batch_size},
                          {"class_weights", fcfg.use_class_weights}},
                     *seed);
          std::cout << "accuracy " << summary.mean_accuracy << " (" << summary.std_accuracy
                    << "), macro-F1 " << summary.mean_macro_f1 << " ("
                    << summary.std_macro_f1 << ") over " << *runs << " runs\n";
        };
      });
    }
  }

  // ---- embed ----
  {
    auto* em = app.add_subcommand("embed", "sentence embedding extraction");
    auto ckpt = std::make_shared<std::string>();
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto layer = std::make_shared<int64_t>(-1);
    auto batch = std::make_shared<int64_t>(16);
    em->add_option("--ckpt", *ckpt, "checkpoint directory")->required();
    em->add_option("--in", *in, "text file, one entry per line")->required();
    em->add_option("--out", *out, "output CSV")->required();
    em->add_option("--layer", *layer, "hidden stack index (default: penultimate block)");
    em->add_option("--batch-size", *batch, "batch size (default 16)");
    em->callback([=, &action] {
      action = [=] {
        const LoadedModel m = load_model(*ckpt);
        const auto vocab = bpe::Vocabulary::load(*ckpt);
        const auto texts = read_lines(*in);
        embed::EmbedOptions opts;
        opts.layer_index = *layer;
        const auto rows = embed::embed_many(texts, vocab, m.params, m.cfg, opts, *batch);
        std::vector<std::string> ids;
        for (size_t i = 0; i < rows.size(); ++i) ids.push_back(std::to_string(i));
        embed::write_embeddings_csv(*out, ids, {}, rows);
        record_run(*out, false,
                   json{{"command", "embed"}, {"ckpt", *ckpt}, {"in", *in}, {"layer", *layer}},
                   0);
        std::cout << "embedded " << rows.size() << " texts into " << *out << "\n";
      };
    });
  }

  // ---- profile ----
  {
    auto* prof = app.add_subcommand("profile", "author profiling over tweet embeddings");
    prof->require_subcommand(1);

    auto add_common = [](CLI::App* sub, std::shared_ptr<std::string> authors,
                         std::shared_ptr<std::string> ckpt, std::shared_ptr<std::string> out,
                         std::shared_ptr<std::string> agg, std::shared_ptr<int64_t> layer,
                         std::shared_ptr<uint64_t> seed) {
      sub->add_option("--authors", *authors, "authors JSON-lines file")->required();
      sub->add_option("--ckpt", *ckpt, "checkpoint directory")->required();
      sub->add_option("--out", *out, "output directory")->required();
      sub->add_option("--agg", *agg, "aggregation: mean or max (default mean)");
      sub->add_option("--layer", *layer, "hidden stack index (default penultimate)");
      sub->add_option("--seed", *seed, "seed for splits and head init");
    };

    auto embed_authors = [](const std::string& authors_path, const std::string& ckpt_dir,
                            int64_t layer) {
      const LoadedModel m = load_model(ckpt_dir);
      const auto vocab = bpe::Vocabulary::load(ckpt_dir);
      embed::EmbedOptions opts;
      opts.layer_index = layer;
      std::vector<embed::AuthorProfile> profiles;
      for (const auto& a : embed::load_authors_jsonl(authors_path)) {
        profiles.push_back(embed::embed_author(a, vocab, m.params, m.cfg, opts));
      }
      return profiles;
    };

    {
      auto* train = prof->add_subcommand("train", "train the dense profiling head");
      auto authors = std::make_shared<std::string>();
      auto ckpt = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto agg = std::make_shared<std::string>("mean");
      auto layer = std::make_shared<int64_t>(-1);
      auto seed = std::make_shared<uint64_t>(0);
      auto runs = std::make_shared<int64_t>(10);
      add_common(train, authors, ckpt, out, agg, layer, seed);
      train->add_option("--runs", *runs, "seeded repetitions (default 10)");
      train->callback([=, &action] {
        action = [=] {
          const auto profiles = embed_authors(*authors, *ckpt, *layer);
          embed::ProfileHeadConfig hcfg;
          hcfg.seed = *seed;
          const auto res =
              embed::train_profile_head(profiles, embed::aggregate_from_string(*agg), hcfg,
                                        *runs);
          std::filesystem::create_directories(*out);
          json j{{"aggregation", *agg},
                 {"accuracy", res.mean_accuracy},
                 {"accuracy_std", res.std_accuracy},
                 {"precision", res.mean_precision},
                 {"recall", res.mean_recall}};
          json runs_j = json::array();
          for (const auto& r : res.runs) {
            runs_j.push_back(
                {{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}});
          }
          j["runs"] = runs_j;
          write_json_file(*out + "/metrics.json", j);
          record_run(*out, true,
                     json{{"command", "profile train"},
                          {"authors", *authors},
                          {"ckpt", *ckpt},
                          {"agg", *agg},
                          {"runs", *runs}},
                     *seed);
          std::cout << "profiling accuracy " << res.mean_accuracy << " ("
                    << res.std_accuracy << ") precision " << res.mean_precision << " recall "
                    << res.mean_recall << "\n";
        };
      });
    }
    {
      auto* ablate = prof->add_subcommand("ablate", "accuracy curves over tweets/users");
      auto authors = std::make_shared<std::string>();
      auto ckpt = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto agg = std::make_shared<std::string>("mean");
      auto layer = std::make_shared<int64_t>(-1);
      auto seed = std::make_shared<uint64_t>(0);
      auto runs = std::make_shared<int64_t>(3);
      auto tweet_counts = std::make_shared<std::vector<int64_t>>();
      auto user_counts = std::make_shared<std::vector<int64_t>>();
      add_common(ablate, authors, ckpt, out, agg, layer, seed);
      ablate->add_option("--runs", *runs, "seeded repetitions per point (default 3)");
      ablate->add_option("--tweet-counts", *tweet_counts, "tweets-per-author curve points")->delimiter(',');
      ablate->add_option("--user-counts", *user_counts, "training-user curve points")->delimiter(',');
      ablate->callback([=, &action] {
        action = [=] {
          if (tweet_counts->empty() && user_counts->empty()) {
            throw ValidationError("profile ablate: provide --tweet-counts or --user-counts");
          }
          const auto profiles = embed_authors(*authors, *ckpt, *layer);
          embed::ProfileHeadConfig hcfg;
          hcfg.seed = *seed;
          const auto mode = embed::aggregate_from_string(*agg);
          std::filesystem::create_directories(*out);
          if (!tweet_counts->empty()) {
            const auto curve =
                embed::ablate_tweets_per_author(profiles, *tweet_counts, mode, hcfg, *runs);
            embed::write_ablation_csv(*out + "/tweets_ablation.csv", "tweets_per_author",
                                      curve);
          }
          if (!user_counts->empty()) {
            const auto curve =
                embed::ablate_num_users(profiles, *user_counts, mode, hcfg, *runs);
            embed::write_ablation_csv(*out + "/users_ablation.csv", "training_users", curve);
          }
          record_run(*out, true,
                     json{{"command", "profile ablate"},
                          {"authors", *authors},
                          {"agg", *agg},
                          {"tweet_counts", *tweet_counts},
                          {"user_counts", *user_counts},
                          {"runs", *runs}},
                     *seed);
          std::cout << "ablation curves written to " << *out << "\n";
        };
      });
    }
  }

  // ---- project ----
  {
    auto* proj = app.add_subcommand("project", "2D projection of embeddings");
    proj->require_subcommand(1);
    auto* pca = proj->add_subcommand("pca", "PCA scatter of embedding CSVs");
    auto ins = std::make_shared<std::vector<std::string>>();
    auto kinds = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    pca->add_option("--in", *ins, "embeddings CSV (repeatable)")->required();
    pca->add_option("--kind", *kinds,
                    "point kind per --in file (claim, hoax-center, author, tweet)");
    pca->add_option("--out", *out, "output directory")->required();
    pca->callback([=, &action] {
      action = [=] {
        if (!kinds->empty() && kinds->size() != ins->size()) {
          throw ValidationError("project pca: --kind count must match --in count");
        }
        std::vector<std::vector<double>> all_rows;
        std::vector<std::string> labels, point_kinds;
        for (size_t f = 0; f < ins->size(); ++f) {
          const auto table = embed::read_embeddings_csv((*ins)[f]);
          const std::string kind = kinds->empty() ? "claim" : (*kinds)[f];
          for (size_t i = 0; i < table.rows.size(); ++i) {
            all_rows.push_back(table.rows[i]);
            labels.push_back(table.labels[i].empty() ? table.ids[i] : table.labels[i]);
            point_kinds.push_back(kind);
          }
        }
        const auto model = project::pca_fit(all_rows, 2);
        const auto proj_rows = project::pca_transform(model, all_rows);
        std::vector<project::ScatterPoint> points;
        for (size_t i = 0; i < proj_rows.size(); ++i) {
          points.push_back({proj_rows[i][0], proj_rows[i][1], labels[i], point_kinds[i]});
        }
        std::filesystem::create_directories(*out);
        project::emit_scatter(points, *out + "/scatter.csv", *out + "/scatter.svg");
        json j{{"command", "project pca"},
               {"in", *ins},
               {"explained_variance", model.explained_variance}};
        record_run(*out, true, j, 0);
        std::cout << "projected " << points.size() << " points; explained variance "
                  << model.explained_variance[0] << ", " << model.explained_variance[1]
                  << "\n";
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    if (action) action();
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

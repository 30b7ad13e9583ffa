#include <doctest.h>

#include "oeasd/config.hpp"
#include "oeasd/error.hpp"

using namespace oeasd;

TEST_CASE("empty text gives the defaults") {
  const ExperimentConfig c = parse_config("");
  CHECK(c.source == DatasetSource::synth);
  CHECK(c.dsp.n_mels == 224);
  CHECK(c.extractor.embedding_dim == 128);
  CHECK(c.loss.alpha == 10.0);
  CHECK(c.mixup.beta == 0.2);
  CHECK(c.train.batch_size == 128);
  CHECK(c.train.weight_decay == 0.01);
  CHECK(c.gmm_components == 2);
  CHECK(c.pauc_p == 0.1);
  CHECK(c.anomalous_counts == std::vector<int>{0, 1, 2, 4, 8, 16, 32});
}

TEST_CASE("sections and dotted keys are equivalent") {
  const ExperimentConfig a = parse_config("[train]\nepochs = 5  # short\nbatch_size=32\n[extractor]\nconv_stack = 8x4x4,16x3x2\n");
  const ExperimentConfig b = parse_config("train.epochs = 5\ntrain.batch_size = 32\nextractor.conv_stack = 8x4x4,16x3x2\n");
  CHECK(a.train.epochs == 5);
  CHECK(b.train.batch_size == 32);
  CHECK(to_text(a) == to_text(b));
  CHECK(a.extractor.conv_stack.size() == 2);
}

TEST_CASE("bad input is rejected") {
  try {
    parse_config("train.epochs");
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
  }
  for (const char* text : {"train.nope = 1", "epochs = 3", "train.epochs = x", "train.batch_size = 3",
                           "dataset.source = tape", "ablation.use_mixup = maybe"}) {
    INFO(std::string(text));
    try {
      parse_config(text);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  }
}

TEST_CASE("canonical text round trips") {
  ExperimentConfig c = parse_config(
      "synth.noise_level = 0.75\nablation.use_machine_ids = false\nablation.id_loss_kind = cross_entropy\n"
      "run.seeds = 3,4\nsweep.contamination_counts = 0,32\ndataset.target_types = type1\n" + std::string());
  const ExperimentConfig d = parse_config(to_text(c));
  CHECK(to_text(d) == to_text(c));
  CHECK(d.synth.noise_level == 0.75);
  CHECK(d.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(d.target_types == std::vector<std::string>{"type1"});
}

TEST_CASE("ablations fold into the training setup") {
  ExperimentConfig c;
  c.ablation.use_machine_ids = false;
  c.ablation.use_type_loss = false;
  c.ablation.use_mixup = false;
  const TrainSetup s = c.train_setup(5);
  CHECK(s.seed == 5);
  CHECK(s.loss.alpha == 0.0);
  CHECK_FALSE(s.loss.type_loss_enabled);
  CHECK_FALSE(s.mixup.enabled);
}

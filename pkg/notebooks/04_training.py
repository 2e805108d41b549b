"""Three training phases on the toy captioning task, then detection.

Phase 1 fits the generator, phase 2 the discriminator, and phase 3 adds the
discriminator reward to the generator.  The trained discriminator's
"no change" probability becomes the pairwise statistic for detection.
"""
from changestream import detect
from changestream.description import (
    TrainConfig,
    TrainHistory,
    discriminator_accuracy,
    language_stat_table,
    make_toy_dataset,
    train_phases,
)

data = make_toy_dataset(seed=0)
history = TrainHistory()
gen, disc = train_phases(data, TrainConfig(), history)
print(f"phase 1 loss {history.generator[0]:.3f} -> {history.generator[-1]:.3f}")
print(f"phase 2 loss {history.discriminator[0]:.3f} -> {history.discriminator[-1]:.3f}")
print(f"phase 3 expected loss {history.phase3[0]:.4f} -> {history.phase3[-1]:.4f}")

held_out = make_toy_dataset(num_streams=10, seed=3)
print("held-out discriminator accuracy:", round(discriminator_accuracy(disc, held_out, seed=1), 4))
for stream in held_out.streams:
    table = language_stat_table(stream.features, disc, gen)
    print(stream.manifest.stream_id, "true", stream.manifest.true_changepoint,
          "rc", detect(table, "rc").kappa_hat)

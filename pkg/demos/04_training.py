"""Train a small classifier on a synthetic three-class shape dataset.

Uses a reduced model so the demo finishes in under a minute; the default
configuration (T schedule 400/300/200, widths 32/64/128) is what the
`meshlearn train --synthetic` command runs.
"""

import numpy as np

import meshlearn.network as net
from meshlearn.data import SyntheticSpec, generate_synthetic, make_splits
from meshlearn.training import TrainConfig, train

spec = SyntheticSpec(samples_per_class=9, face_band=(80, 140), jitter=0.02,
                     seed=0)
dataset = generate_synthetic(spec)
train_set, test_set = make_splits(dataset, per_class_train=6, seed=0)
print(f"classes={dataset.class_names} "
      f"train={len(train_set.samples)} test={len(test_set.samples)}")

config = net.ModelConfig(num_classes=3, k_geo=2, k_geom=2,
                         block_channels=(8, 8, 8), region_sizes=(3, 4, 5),
                         t_schedule=(40, 34, 28))
result = train(train_set.pairs(), test_set.pairs(), config,
               TrainConfig(epochs=10, batch_size=3),
               progress=lambda em: print(em.line()),
               stop_at_test_acc=1.0)
print(f"best test accuracy {result.best_test_acc:.3f} "
      f"at epoch {result.best_epoch}")

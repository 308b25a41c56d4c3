"""Train on Gaussian blobs with and without the T1 term.

Compares the mean |corr| between hidden units on the validation split at
the best epoch.  A large weight shows the effect clearly; the weight picked
by validation accuracy is usually small, so its effect is much weaker.
"""
from persreg import trainer
from persreg.datasets import synth_dataset
from persreg.nncore import MLPSpec
from persreg.regularizers import RegularizerSpec
from persreg.trainer import TrainConfig

ds = synth_dataset(classes=4, per_class=500, dims=2, seed=0, separation=4.0)
mlp = MLPSpec(2, (16, 16), 4)

configs = [TrainConfig(mlp, ds, RegularizerSpec("none", 0.0), batch_size=64, seed=0)]
configs += [TrainConfig(mlp, ds, RegularizerSpec("T1", w), batch_size=64, seed=0) for w in (0.01, 0.1, 1.0)]
records = trainer.run_many(configs, workers=1)

print(f"{'regularizer':>11} {'omega':>6} {'epochs':>6} {'val acc':>8} {'test acc':>8} {'|corr|':>7}")
for r in records:
    corr = r.epochs[r.best_epoch - 1]["val_hidden_corr"]
    print(f"{r.regularizer:>11} {r.omega:>6g} {r.epochs_trained:>6} {r.best_val_acc:>8.4f} {r.test_acc:>8.4f} "
          f"{corr:>7.4f}")

chosen = trainer.best_record(records[1:])
print(f"selected by validation accuracy: omega = {chosen.omega:g}")

"""Train the LSTM on a synthetic pixel set and compare it with the Bayes oracle.

The generator draws a trapezoid seasonal profile for all 37 features and
shifts the clean class (here by half a noise sd) on NDMI, CCC, FAPAR and
CHL_RED_EDGE during the plateau. The oracle is the accuracy of the exact
likelihood-ratio classifier, an upper bound for any model.

    python demos/01_oracle_and_lstm.py
"""

import numpy as np

from broomsat.analysis import permutation_importance
from broomsat.lstm import LstmConfig, TrainConfig, accuracy, fit, stratified_split
from broomsat.synth import SynthConfig, bayes_oracle, gen_dataset

cfg = SynthConfig(n_pixels=400, offset=0.5, seed=1)
data, truth = gen_dataset(cfg)
print("dataset", data.inputs.shape, "labels", np.bincount(data.labels))

oracle = bayes_oracle(cfg, n_samples=20000)
print(f"oracle accuracy {oracle.accuracy:.3f}  95% CI [{oracle.ci_low:.3f}, {oracle.ci_high:.3f}]"
      f"  closed form {oracle.closed_form:.3f}")

# a smaller network than the default keeps this under a minute on one core
net = LstmConfig(lstm_units=(16, 8), dense_units=8)
train_idx, test_idx = stratified_split(data.labels, 0.3, np.random.default_rng(0))
model, hist = fit(data.subset(train_idx), net, TrainConfig(epochs=20, seed=0),
                  log=lambda s: print(" ", s))

test = data.subset(test_idx)
acc = accuracy(model.predict_proba(test.inputs), test.labels)
print(f"held-out accuracy {acc:.3f} ({acc / oracle.accuracy:.1%} of the oracle)")

rep = permutation_importance(model, test.inputs, test.labels, repeats=3, seed=0,
                             feature_names=data.feature_names)
print("most important features:", ", ".join(rep.top(6)))

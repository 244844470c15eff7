"""Train the point-set regressor and check it against a trivial baseline.

Textured patches whose relief amplitude maps to a known n stand in for
lab scans. Half of the amplitudes are held back so the evaluation only
sees textures the network never trained on. A reduced-width network keeps
the run to about a minute; the default widths train the same way.
"""
import numpy as np

from pcfriction.augment import CorpusSpec, build_corpus
from pcfriction.regressor import NetConfig, RegressionNet, TrainConfig, predict_batch, train
from pcfriction.synthetic import AMP_MAX, AMP_MIN, amplitude_to_n, texture_cloud


def regions(amplitudes, seed):
    return {f"T{i:02d}": (texture_cloud(a, 2000, np.random.default_rng([seed, i])),
                          float(amplitude_to_n(a)))
            for i, a in enumerate(amplitudes)}


amps = np.linspace(AMP_MIN, AMP_MAX, 24)
corpus = build_corpus(regions(amps[::2], 1), CorpusSpec(samples_per_region=80, seed=1))
held_out = build_corpus(regions(amps[1::2], 2),
                        CorpusSpec(samples_per_region=30, blend_fraction=0, seed=2))

net = RegressionNet(NetConfig(encoder_widths=(3, 32, 64, 256), head_widths=(256, 64, 1)))
print(f"{net.n_params} parameters, {len(corpus)} training samples")


def report(rec):
    print(f"epoch {rec['epoch']:2d}  train L1 {rec['train_loss']:8.1f}  lr {rec['lr']:.2e}")


train(net, corpus, [], TrainConfig(learning_rate=2e-3, decay=0.95, max_epochs=10), callback=report)

y = np.array([s.target_n for s in held_out])
pred = predict_batch(net, [s.cloud for s in held_out])
baseline = np.mean(np.abs(y - np.mean([s.target_n for s in corpus])))
print(f"\nheld-out MAE {np.mean(np.abs(pred - y)):.4f}, constant-mean MAE {baseline:.4f}")

"""Random tiny-network gradient checks shared by unit and acceptance tests."""
import numpy as np

from oracles import finite_difference_grads, max_relative_error
from sectorlstm.neuralnet import ModelConfig, backward, forward, init_params


def random_case(rng, dropout=0.0):
    cfg = ModelConfig(
        lookback=int(rng.choice([3, 5])),
        n_features=int(rng.choice([1, 3])),
        hidden_units=int(rng.choice([2, 3, 4])),
        num_lstm_layers=int(rng.choice([1, 2])),
        dropout=dropout,
        dense_units=int(rng.choice([3, 5])),
        horizon=int(rng.choice([1, 2])),
    )
    batch = int(rng.choice([1, 2]))
    params = init_params(cfg, int(rng.integers(2**32)))
    # perturb biases too so no component sits at an init constant
    for arr in params.arrays():
        arr += rng.normal(0, 0.1, arr.shape)
    x = rng.uniform(0, 1, (batch, cfg.lookback, cfg.n_features))
    upstream = rng.normal(0, 1, (batch, cfg.horizon))
    return cfg, params, x, upstream


def check_case(cfg, params, x, upstream, mask_seed=None, kernels=None):
    """Max relative error of backward() against extended-precision central differences."""
    _, cache = forward(x, params, cfg, "train", mask_seed, kernels=kernels)
    grads = backward(cache, upstream, kernels=kernels).arrays()
    masks = [lc.mask for lc in cache.layers]
    numeric = finite_difference_grads(x, params.arrays(), cfg.num_lstm_layers, upstream, step=1e-5, masks=masks)
    return max_relative_error(grads, numeric)


def run_trials(n_trials, seed, dropout=0.0):
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_trials):
        cfg, params, x, up = random_case(rng, dropout)
        errors.append(check_case(cfg, params, x, up, mask_seed=int(rng.integers(2**32))))
    return errors

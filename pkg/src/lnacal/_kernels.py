"""Gradient-descent training kernels.

The epoch loop of the network trainer is the hot path of the package
(thousands of full-batch passes per fit), so it ships in two
implementations selected by ``lnacal._backend``:

* a generic pure-numpy path (any layer count, optional mini-batches)
* a numba ``@njit`` kernel specialized for the default one-hidden-layer
  full-batch configuration

Both follow the identical update and early-stopping schedule: evaluate
validation loss after every epoch, remember the weights with the lowest
validation loss (strict improvement), stop after ``patience`` epochs
without improvement, and return the remembered weights.

Loss convention: mean over samples of the summed squared output error,
L = sum((pred - y)^2) / n_samples.
"""

from __future__ import annotations

import numpy as np

from lnacal import _backend

ACT_TANH = 0
ACT_IDENTITY = 1
ACTIVATIONS = {"tanh": ACT_TANH, "identity": ACT_IDENTITY}


def forward(X, weights, biases, act_id):
    """Network output for standardized inputs X (n, d_in)."""
    h = X
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < last and act_id == ACT_TANH:
            h = np.tanh(h)
    return h


def loss_value(X, Y, weights, biases, act_id):
    e = forward(X, weights, biases, act_id) - Y
    return float(np.sum(e * e) / X.shape[0])


def loss_and_grads(X, Y, weights, biases, act_id):
    """Loss plus analytic gradients via backpropagation."""
    n = X.shape[0]
    last = len(weights) - 1
    acts = [X]
    h = X
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < last and act_id == ACT_TANH:
            h = np.tanh(h)
        acts.append(h)
    err = acts[-1] - Y
    loss = float(np.sum(err * err) / n)

    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    delta = (2.0 / n) * err
    for i in range(last, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if act_id == ACT_TANH:
                delta = delta * (1.0 - acts[i] * acts[i])
    return loss, grads_w, grads_b


def _train_numpy(Xtr, Ytr, Xval, Yval, weights, biases, act_id, lr,
                 max_epochs, patience, batch_size):
    weights = [w.copy() for w in weights]
    biases = [b.copy() for b in biases]
    n = Xtr.shape[0]
    if batch_size is None or batch_size >= n:
        batch_size = n

    best_val = loss_value(Xval, Yval, weights, biases, act_id)
    best_epoch = 0
    best_w = [w.copy() for w in weights]
    best_b = [b.copy() for b in biases]

    epochs_run = 0
    for epoch in range(1, max_epochs + 1):
        epochs_run = epoch
        for start in range(0, n, batch_size):
            xb = Xtr[start:start + batch_size]
            yb = Ytr[start:start + batch_size]
            _, gw, gb = loss_and_grads(xb, yb, weights, biases, act_id)
            for i in range(len(weights)):
                weights[i] -= lr * gw[i]
                biases[i] -= lr * gb[i]
        val = loss_value(Xval, Yval, weights, biases, act_id)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            for i in range(len(weights)):
                best_w[i][...] = weights[i]
                best_b[i][...] = biases[i]
        elif epoch - best_epoch >= patience:
            break
    return best_w, best_b, best_val, best_epoch, epochs_run


# ---------------------------------------------------------------------------
# numba fast path (one hidden layer, full batch)

if _backend.HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _val_loss_1h(X, Y, W1, b1, W2, b2, act_id):
        H = X @ W1
        H = H + b1
        if act_id == ACT_TANH:
            H = np.tanh(H)
        P = H @ W2 + b2
        E = P - Y
        return np.sum(E * E) / X.shape[0]

    @njit(cache=True)
    def _train_1h_numba(Xtr, Ytr, Xval, Yval, W1, b1, W2, b2, act_id, lr,
                        max_epochs, patience):
        n = Xtr.shape[0]
        W1 = W1.copy()
        b1 = b1.copy()
        W2 = W2.copy()
        b2 = b2.copy()

        best_val = _val_loss_1h(Xval, Yval, W1, b1, W2, b2, act_id)
        best_epoch = 0
        bW1 = W1.copy()
        bb1 = b1.copy()
        bW2 = W2.copy()
        bb2 = b2.copy()

        epochs_run = 0
        for epoch in range(1, max_epochs + 1):
            epochs_run = epoch
            H = Xtr @ W1 + b1
            if act_id == ACT_TANH:
                H = np.tanh(H)
            E = H @ W2 + b2 - Ytr
            delta2 = (2.0 / n) * E
            gW2 = H.T @ delta2
            gb2 = np.sum(delta2, axis=0)
            delta1 = delta2 @ W2.T
            if act_id == ACT_TANH:
                delta1 = delta1 * (1.0 - H * H)
            gW1 = Xtr.T @ delta1
            gb1 = np.sum(delta1, axis=0)

            W1 -= lr * gW1
            b1 -= lr * gb1
            W2 -= lr * gW2
            b2 -= lr * gb2

            val = _val_loss_1h(Xval, Yval, W1, b1, W2, b2, act_id)
            if val < best_val:
                best_val = val
                best_epoch = epoch
                bW1[:, :] = W1
                bb1[:] = b1
                bW2[:, :] = W2
                bb2[:] = b2
            elif epoch - best_epoch >= patience:
                break
        return bW1, bb1, bW2, bb2, best_val, best_epoch, epochs_run


def train_dense(Xtr, Ytr, Xval, Yval, weights, biases, act_id, lr,
                max_epochs, patience, batch_size=None):
    """Run the training loop on the active backend.

    Returns (weights, biases, best_val_loss, best_epoch, epochs_run,
    backend_name). The numba kernel covers the one-hidden-layer full-batch
    case; anything else silently uses the numpy path.
    """
    use_numba = (
        _backend.active_backend() == "numba"
        and len(weights) == 2
        and (batch_size is None or batch_size >= Xtr.shape[0])
    )
    if use_numba:
        bW1, bb1, bW2, bb2, best_val, best_epoch, epochs_run = _train_1h_numba(
            np.ascontiguousarray(Xtr), np.ascontiguousarray(Ytr),
            np.ascontiguousarray(Xval), np.ascontiguousarray(Yval),
            weights[0], biases[0], weights[1], biases[1],
            act_id, lr, max_epochs, patience,
        )
        return [bW1, bW2], [bb1, bb2], float(best_val), int(best_epoch), \
            int(epochs_run), "numba"
    w, b, best_val, best_epoch, epochs_run = _train_numpy(
        Xtr, Ytr, Xval, Yval, weights, biases, act_id, lr,
        max_epochs, patience, batch_size,
    )
    return w, b, float(best_val), int(best_epoch), int(epochs_run), "numpy"

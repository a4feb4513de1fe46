"""A tour of the small autodiff core: tensors, a bi-LSTM read, and gradient checks."""

# %%
import numpy as np

from metaactive import nn_core as nn

rng = np.random.default_rng(0)

# %% Tensors record the operations applied to them; backward() walks the tape.
x = nn.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = nn.Tensor(rng.normal(size=(4, 2)), requires_grad=True)
loss = nn.tsum(nn.tanh(nn.matmul(x, w)))
loss.backward()
print("loss", float(loss))
print("dloss/dw\n", w.grad)

# %% The same gradient by central differences.
report = nn.grad_check(lambda: nn.tsum(nn.tanh(nn.matmul(x, w))), [x, w])
print(report)

# %% A bidirectional LSTM reads a sequence of 5 vectors and returns one row per position,
# the forward state next to the backward state.
store = nn.ParamStore()
nn.init_lstm(store, "fwd", 4, 3, rng)
nn.init_lstm(store, "bwd", 4, 3, rng)
seq = rng.normal(size=(5, 4))
hidden = nn.bidirectional_scan(seq, nn.LstmCellParams.from_store(store, "fwd"),
                               nn.LstmCellParams.from_store(store, "bwd"))
print(hidden.shape)

# %% Changing the last element moves the first row too, through the backward pass.
seq2 = seq.copy()
seq2[-1] += 1.0
hidden2 = nn.bidirectional_scan(seq2, nn.LstmCellParams.from_store(store, "fwd"),
                                nn.LstmCellParams.from_store(store, "bwd"))
print("row 0 change:", np.abs(hidden2.data[0] - hidden.data[0]).max())

# %% Parameters round-trip through the checkpoint format.
nn.save_checkpoint("/tmp/demo.mpck", store, {"note": "demo"})
restored, header = nn.load_checkpoint("/tmp/demo.mpck")
print(header["note"], np.array_equal(restored.flatten(), store.flatten()))

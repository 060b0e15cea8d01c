"""Optional recurrent viewport predictor (requires the 'rnn' extra).

Same contract as the constant-velocity default: a sequence of per-step
(yaw, pitch, position) deltas goes in, the next deltas come out. Weights are
trained on recorded traces via train_on_traces; an untrained model falls back
to constant-velocity behavior through its residual head.
"""

from __future__ import annotations

import numpy as np

from .viewport import (PredictedViewport, ViewportTrajectory, wrap_angle)


def _require_torch():
    try:
        import torch
        return torch
    except ImportError as exc:  # pragma: no cover
        raise ImportError(
            "the recurrent predictor needs torch; install volstream[rnn]") from exc


class RecurrentPredictor:
    """Tiny LSTM over delta sequences; predicts a residual on top of the
    constant-velocity extrapolation so an untrained network is harmless."""

    def __init__(self, hidden: int = 32, history: int = 16, seed: int = 0):
        torch = _require_torch()
        torch.manual_seed(seed)
        self.history = history
        self._torch = torch
        self.net = torch.nn.LSTM(input_size=5, hidden_size=hidden, batch_first=True)
        self.head = torch.nn.Linear(hidden, 5)
        with torch.no_grad():
            self.head.weight.zero_()
            self.head.bias.zero_()

    def _deltas(self, states) -> np.ndarray:
        rows = []
        for a, b in zip(states[:-1], states[1:]):
            rows.append([wrap_angle(b.yaw - a.yaw), b.pitch - a.pitch,
                         b.position[0] - a.position[0],
                         b.position[1] - a.position[1],
                         b.position[2] - a.position[2]])
        return np.asarray(rows, dtype=np.float32)

    def predict(self, traj: ViewportTrajectory, horizon_us: int) -> PredictedViewport:
        torch = self._torch
        states = list(traj._buf)
        if len(states) < 2:
            last = states[-1] if states else None
            if last is None:
                raise ValueError("cannot predict from an empty trajectory")
            return PredictedViewport(position=last.position, yaw=last.yaw,
                                     pitch=last.pitch, low_confidence=True)
        deltas = self._deltas(states[-(self.history + 1):])
        dt = states[-1].timestamp_us - states[-2].timestamp_us
        scale = horizon_us / dt
        with torch.no_grad():
            x = torch.from_numpy(deltas).unsqueeze(0)
            hseq, _ = self.net(x)
            residual = self.head(hseq[0, -1]).numpy()
        step = deltas[-1] + residual
        b = states[-1]
        pitch = float(np.clip(b.pitch + step[1] * scale, -np.pi / 2, np.pi / 2))
        return PredictedViewport(
            position=(b.position[0] + step[2] * scale,
                      b.position[1] + step[3] * scale,
                      b.position[2] + step[4] * scale),
            yaw=wrap_angle(b.yaw + float(step[0]) * scale),
            pitch=pitch)

    def train_on_traces(self, traces, epochs: int = 30, lr: float = 1e-3) -> float:
        """traces: iterable of ViewportState sequences. Returns final loss."""
        torch = self._torch
        xs, ys = [], []
        for states in traces:
            d = self._deltas(list(states))
            for i in range(2, len(d)):
                lo = max(0, i - self.history)
                xs.append(d[lo:i])
                ys.append(d[i] - d[i - 1])  # residual over constant velocity
        if not xs:
            raise ValueError("traces too short to train on")
        opt = torch.optim.Adam(list(self.net.parameters())
                               + list(self.head.parameters()), lr=lr)
        loss_val = 0.0
        for _ in range(epochs):
            total = 0.0
            for x, y in zip(xs, ys):
                xt = torch.from_numpy(x).unsqueeze(0)
                yt = torch.from_numpy(y)
                hseq, _ = self.net(xt)
                pred = self.head(hseq[0, -1])
                loss = torch.mean((pred - yt) ** 2)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss)
            loss_val = total / len(xs)
        return loss_val

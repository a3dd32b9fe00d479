"""Deterministic stand-ins for the environment, used to force outcomes."""

import numpy as np

from persuade.sim import ScanResult, WaitResult
from persuade.types import Trace


class StubEnv:
    """Every watched atom fires at once; ``decide(j, phase_scan)`` says whether member j is followed.

    ``phase_scan`` counts scans since the last ``note_phase`` call, so a stub
    can reject only the first probe of each phase.
    """

    def __init__(self, horizon, decide):
        self.horizon = horizon
        self.t = 0
        self.decide = decide
        self.trace = Trace(horizon, 0.0)
        self._scans = 0

    @property
    def remaining(self):
        return self.horizon - self.t

    def note_interval(self, J):
        self.trace.interval_history.append((self.t, float(J[0]), float(J[1])))

    def note_phase(self, J):
        self.trace.phase_intervals.append((float(J[0]), float(J[1])))
        self._scans = 0

    def note_flag(self, k, v):
        self.trace.flags[k] = v

    def play_until(self, scheme, watch, max_rounds=None):
        self.t += 1
        atom = watch[0]
        ok = self.decide(0, self._scans)
        self._scans += 1
        return WaitResult(1, True, atom, scheme.actions[atom] if ok else 0, 1)

    def scan(self, batch, watch, max_rounds=None, stop_on_reject=True):
        acc = 0
        for j in range(len(batch)):
            if self.remaining == 0:
                return ScanResult(j, acc, False, True, j)
            self.t += 1
            ok = self.decide(j, self._scans)
            if not ok:
                self._scans += 1
                return ScanResult(j + 1, acc, True, False, j + 1, watch[0], 0)
            acc += 1
        self._scans += 1
        return ScanResult(len(batch), acc, False, False, len(batch), watch[0], 1)

    def scan_signals(self, ms, max_rounds=None):
        from persuade.binary import signal_arrays
        from persuade.types import SchemeBatch
        W, P = signal_arrays(np.asarray(ms), 0.25)
        return self.scan(SchemeBatch(W, P, (0, 1), np.array([0.75, 0.25])), (1,))

    def commit(self, scheme):
        self.trace.committed = scheme
        self.t = self.horizon

    def commit_signal(self, m):
        self.trace.committed_param = m
        self.t = self.horizon

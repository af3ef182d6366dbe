"""More-Thuente line search driven by reverse communication.

This is the MINPACK-2 ``dcsrch``/``dcstep`` pair: a safeguarded cubic/quadratic
interpolation search for a step satisfying the strong Wolfe conditions. The
caller evaluates ``phi(stp)`` and ``phi'(stp)`` whenever :meth:`step` returns
``SearchStatus.EVALUATE``.
"""

from __future__ import annotations

import enum
import math

XTRAPL = 1.1
XTRAPU = 4.0


class SearchStatus(enum.Enum):
    EVALUATE = "evaluate"
    CONVERGED = "converged"
    WARNING = "warning"
    ERROR = "error"


class MoreThuente:
    """One line search; construct with the values at ``stp = 0``."""

    def __init__(self, f0: float, g0: float, stp: float, c1: float, c2: float,
                 xtol: float = 0.1, stpmin: float = 0.0, stpmax: float = 1e10):
        self.c1, self.c2, self.xtol = c1, c2, xtol
        self.stpmin, self.stpmax = stpmin, stpmax
        self.message = ""
        if stp < stpmin or stp > stpmax or g0 >= 0.0:
            self.status = SearchStatus.ERROR
            self.message = "invalid line search start"
            self.stp = stp
            return
        self.status = SearchStatus.EVALUATE
        self.brackt = False
        self.stage = 1
        self.finit, self.ginit = f0, g0
        self.gtest = c1 * g0
        self.width = stpmax - stpmin
        self.width1 = self.width / 0.5
        self.stx, self.fx, self.gx = 0.0, f0, g0
        self.sty, self.fy, self.gy = 0.0, f0, g0
        self.stmin = 0.0
        self.stmax = stp + XTRAPU * stp
        self.stp = stp

    def armijo(self, f: float) -> bool:
        return f <= self.finit + self.stp * self.gtest

    def step(self, f: float, g: float) -> SearchStatus:
        """Consume ``phi(stp), phi'(stp)``; update ``self.stp`` and the status."""
        stp = self.stp
        ftest = self.finit + stp * self.gtest
        if self.stage == 1 and f <= ftest and g >= 0.0:
            self.stage = 2

        status, msg = None, ""
        if self.brackt and (stp <= self.stmin or stp >= self.stmax):
            status, msg = SearchStatus.WARNING, "rounding errors prevent progress"
        if self.brackt and self.stmax - self.stmin <= self.xtol * self.stmax:
            status, msg = SearchStatus.WARNING, "xtol test satisfied"
        if stp == self.stpmax and f <= ftest and g <= self.gtest:
            status, msg = SearchStatus.WARNING, "stp = stpmax"
        if stp == self.stpmin and (f > ftest or g >= self.gtest):
            status, msg = SearchStatus.WARNING, "stp = stpmin"
        if f <= ftest and abs(g) <= self.c2 * (-self.ginit):
            status, msg = SearchStatus.CONVERGED, "strong Wolfe conditions hold"
        if status is not None:
            self.status, self.message = status, msg
            return status

        if self.stage == 1 and f <= self.fx and f > ftest:
            gt = self.gtest
            fm, gm = f - stp * gt, g - gt
            fxm, gxm = self.fx - self.stx * gt, self.gx - gt
            fym, gym = self.fy - self.sty * gt, self.gy - gt
            self.stx, fxm, gxm, self.sty, fym, gym, stp, self.brackt = dcstep(
                self.stx, fxm, gxm, self.sty, fym, gym, stp, fm, gm, self.brackt, self.stmin, self.stmax)
            self.fx, self.gx = fxm + self.stx * gt, gxm + gt
            self.fy, self.gy = fym + self.sty * gt, gym + gt
        else:
            self.stx, self.fx, self.gx, self.sty, self.fy, self.gy, stp, self.brackt = dcstep(
                self.stx, self.fx, self.gx, self.sty, self.fy, self.gy, stp, f, g,
                self.brackt, self.stmin, self.stmax)

        if self.brackt:
            if abs(self.sty - self.stx) >= 0.66 * self.width1:
                stp = self.stx + 0.5 * (self.sty - self.stx)
            self.width1 = self.width
            self.width = abs(self.sty - self.stx)
            self.stmin = min(self.stx, self.sty)
            self.stmax = max(self.stx, self.sty)
        else:
            self.stmin = stp + XTRAPL * (stp - self.stx)
            self.stmax = stp + XTRAPU * (stp - self.stx)

        stp = min(max(stp, self.stpmin), self.stpmax)
        if self.brackt and (stp <= self.stmin or stp >= self.stmax or
                            self.stmax - self.stmin <= self.xtol * self.stmax):
            stp = self.stx
        self.stp = stp
        self.status = SearchStatus.EVALUATE
        return self.status


def dcstep(stx, fx, dx, sty, fy, dy, stp, fp, dp, brackt, stpmin, stpmax):
    """Safeguarded step update; returns the new interval, trial step and bracket flag."""
    sgnd = dp * math.copysign(1.0, dx)

    if fp > fx:
        theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp
        s = max(abs(theta), abs(dx), abs(dp))
        gamma = s * math.sqrt(max(0.0, (theta / s) ** 2 - (dx / s) * (dp / s)))
        if stp < stx:
            gamma = -gamma
        p = (gamma - dx) + theta
        q = ((gamma - dx) + gamma) + dp
        stpc = stx + (p / q) * (stp - stx)
        stpq = stx + ((dx / ((fx - fp) / (stp - stx) + dx)) / 2.0) * (stp - stx)
        if abs(stpc - stx) <= abs(stpq - stx):
            stpf = stpc
        else:
            stpf = stpc + (stpq - stpc) / 2.0
        brackt = True
    elif sgnd < 0.0:
        theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp
        s = max(abs(theta), abs(dx), abs(dp))
        gamma = s * math.sqrt(max(0.0, (theta / s) ** 2 - (dx / s) * (dp / s)))
        if stp > stx:
            gamma = -gamma
        p = (gamma - dp) + theta
        q = ((gamma - dp) + gamma) + dx
        stpc = stp + (p / q) * (stx - stp)
        stpq = stp + (dp / (dp - dx)) * (stx - stp)
        stpf = stpc if abs(stpc - stp) > abs(stpq - stp) else stpq
        brackt = True
    elif abs(dp) < abs(dx):
        theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp
        s = max(abs(theta), abs(dx), abs(dp))
        gamma = s * math.sqrt(max(0.0, (theta / s) ** 2 - (dx / s) * (dp / s)))
        if stp > stx:
            gamma = -gamma
        p = (gamma - dp) + theta
        q = (gamma + (dx - dp)) + gamma
        r = p / q
        if r < 0.0 and gamma != 0.0:
            stpc = stp + r * (stx - stp)
        elif stp > stx:
            stpc = stpmax
        else:
            stpc = stpmin
        stpq = stp + (dp / (dp - dx)) * (stx - stp)
        if brackt:
            stpf = stpc if abs(stpc - stp) < abs(stpq - stp) else stpq
            if stp > stx:
                stpf = min(stp + 0.66 * (sty - stp), stpf)
            else:
                stpf = max(stp + 0.66 * (sty - stp), stpf)
        else:
            stpf = stpc if abs(stpc - stp) > abs(stpq - stp) else stpq
            stpf = max(stpmin, min(stpmax, stpf))
    else:
        if brackt:
            theta = 3.0 * (fp - fy) / (sty - stp) + dy + dp
            s = max(abs(theta), abs(dy), abs(dp))
            gamma = s * math.sqrt(max(0.0, (theta / s) ** 2 - (dy / s) * (dp / s)))
            if stp > sty:
                gamma = -gamma
            p = (gamma - dp) + theta
            q = ((gamma - dp) + gamma) + dy
            stpf = stp + (p / q) * (sty - stp)
        elif stp > stx:
            stpf = stpmax
        else:
            stpf = stpmin

    if fp > fx:
        sty, fy, dy = stp, fp, dp
    else:
        if sgnd < 0.0:
            sty, fy, dy = stx, fx, dx
        stx, fx, dx = stp, fp, dp
    return stx, fx, dx, sty, fy, dy, stpf, brackt

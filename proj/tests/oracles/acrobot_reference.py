#!/usr/bin/env python3
"""Independent reference values for the acrobot and mountain-car steps.

Written from the printed equations without looking at the C++ code. Prints
states after one and ten steps from a few starts; the unit tests freeze
these numbers.
"""
import math

M1 = M2 = 1.0
L1 = 1.0
LC1 = LC2 = 0.5
I1 = I2 = 1.0
G = 9.8
DT = 0.2
ACTIONS = (-1.0, 0.0, 1.0)
W1_MAX = 4 * math.pi
W2_MAX = 9 * math.pi


def wrap(x):
    if -math.pi <= x <= math.pi:
        return x
    return math.remainder(x, 2 * math.pi)


def clamp(x, lo, hi):
    return max(lo, min(hi, x))


def acrobot_step(state, action_index):
    t1, t2, w1, w2 = state
    a = ACTIONS[action_index]
    d1 = M1 * LC1**2 + M2 * (L1**2 + LC2**2 + 2 * L1 * LC2 * math.cos(t2)) + I1 + I2
    d2 = M2 * (LC2**2 + L1 * LC2 * math.cos(t2)) + I2
    phi2 = M2 * LC2 * G * math.cos(t1 + t2 - math.pi / 2)
    phi1 = (-M2 * L1 * LC2 * w2**2 * math.sin(t2)
            - 2 * M2 * L1 * LC2 * w1 * w2 * math.sin(t2)
            + (M1 * LC1 + M2 * LC1) * G * math.cos(t1 - math.pi / 2) + phi2)
    t2dd = a + d2 * phi2 / d1 - phi2
    t1dd = -(d2 * t2dd + phi1) / d1
    w1n = clamp(w1 + DT * t1dd, -W1_MAX, W1_MAX)
    w2n = clamp(w2 + DT * t2dd, -W2_MAX, W2_MAX)
    t1n = clamp(wrap(t1 + DT * w1n), -math.pi, math.pi)
    t2n = clamp(wrap(t2 + DT * w2n), -math.pi, math.pi)
    return (t1n, t2n, w1n, w2n)


def mountain_car_step(state, action_index):
    x, v = state
    a = ACTIONS[action_index]
    v = clamp(v + a * 0.005 - 0.0025 * math.cos(3 * x), -0.07, 0.07)
    x = x + v
    if x <= -1.2:
        x, v = -1.2, 0.0
    return (min(x, 0.6), v)


def rollout(step, state, action_index, n):
    for _ in range(n):
        state = step(state, action_index)
    return state


def main():
    starts = [((0.0, 0.0, 0.0, 0.0), 0), ((0.0, 0.0, 0.0, 0.0), 2),
              ((0.3, -0.5, 1.0, -2.0), 1), ((2.5, 1.0, -3.0, 5.0), 2)]
    for s, a in starts:
        print("acrobot", s, a, "1:", [repr(v) for v in rollout(acrobot_step, s, a, 1)])
        print("acrobot", s, a, "10:", [repr(v) for v in rollout(acrobot_step, s, a, 10)])
    for s, a in [((-0.5, 0.0), 2), ((-1.1, -0.06), 0)]:
        print("mountain_car", s, a, "1:", [repr(v) for v in rollout(mountain_car_step, s, a, 1)])
        print("mountain_car", s, a, "10:", [repr(v) for v in rollout(mountain_car_step, s, a, 10)])


if __name__ == "__main__":
    main()

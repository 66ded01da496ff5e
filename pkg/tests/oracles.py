"""Brute-force reward oracles written as plain loops, independent of numpy."""


def bsa(prices, t1, horizon=120):
    p1 = prices[t1]
    total = 0.0
    for t in range(t1 + 1, t1 + horizon + 1):
        total += (prices[t] - p1) / p1 * 100
    return total / horizon


def boa(prices, t1, t2):
    low = prices[t1]
    for t in range(t1, t2 + 1):
        if prices[t] < low:
            low = prices[t]
    return (prices[t2] - low) / low * 100


def ssa(prices, t3, lt3):
    if lt3 == 0:
        return 0.0
    p3 = prices[t3]
    total = 0.0
    for t in range(t3 + 1, t3 + lt3 + 1):
        total += -(prices[t] - p3) / p3 * 100
    return total / lt3


def soa(p2, p4):
    return (p4 - p2) / p2 * 100


def shared(primary):
    out = []
    for i in range(4):
        s = 0.0
        for j in range(4):
            if j != i:
                s += primary[j]
        out.append(0.5 * s)
    return out

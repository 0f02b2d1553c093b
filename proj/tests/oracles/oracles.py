"""Independent scalar oracles for the frozen values in the C++ tests.

Run: python3 tests/oracles/oracles.py
"""
import math

# --- class-balanced cross-entropy on a 3x3, 3-class fixture -----------------
C, H, W = 3, 3, 3


def logit(head, c, i, j):
    return round(2.0 * math.sin(1 + head * 27 + c * 9 + i * 3 + j), 3)


label_h = [[0, 2, 0], [0, 2, 0], [0, 0, 0]]
label_v = [[0, 1, 0], [0, 2, 0], [0, 0, 0]]


def direction_loss(head, label):
    X = H * W
    O = sum(1 for r in label for v in r if v > 0)
    B = X - O
    num = den = 0.0
    for i in range(H):
        for j in range(W):
            y = label[i][j]
            w = B / X if y > 0 else O / X
            z = sum(math.exp(logit(head, c, i, j)) for c in range(C))
            ce = -math.log(math.exp(logit(head, y, i, j)) / z)
            num += w * ce
            den += w
    return num / den


loss = 0.5 * (direction_loss(0, label_h) + direction_loss(1, label_v))
print(f"loss_3x3 = {loss:.12f}")

# --- acc_space on a 4x4 map with 2 object pixels, 1 predicted correctly ------
lab = [[0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 2, 0], [0, 0, 0, 0]]
pred = [[0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 3, 0, 0]]
X = 16
O = 2
B = X - O
acc_o = sum(1 for i in range(4) for j in range(4) if lab[i][j] > 0 and pred[i][j] == lab[i][j]) / O
acc_b = sum(1 for i in range(4) for j in range(4) if lab[i][j] == 0 and pred[i][j] == 0) / B
print(f"acc_4x4 as printed = {B / X * acc_o + O / X * acc_b:.12f}")
print(f"acc_4x4 swapped    = {O / X * acc_o + B / X * acc_b:.12f}")


# --- waviness, written from the prose definition ----------------------------
def waviness(p, T=0.1):
    L = len(p)
    A = max(p) - min(p)
    if A == 0:
        return 0.0
    runs = []
    for i, v in enumerate(p):
        if runs and runs[-1][2] == v:
            runs[-1][1] = i
        else:
            runs.append([i, i, v])
    ext = []  # (position, value, at_end)
    for k, (a, b, v) in enumerate(runs):
        if k == 0:
            ext.append((0.0, v, True))
        elif k == len(runs) - 1:
            ext.append((float(L - 1), v, True))
        elif (v > runs[k - 1][2] and v > runs[k + 1][2]) or (v < runs[k - 1][2] and v < runs[k + 1][2]):
            ext.append(((a + b) / 2, v, False))
    d = [ext[n + 1][1] - ext[n][1] for n in range(len(ext) - 1)]
    sig = [abs(x / A) > T for x in d]
    end = [ext[n][2] or ext[n + 1][2] for n in range(len(d))]
    eff = [False] * len(d)
    for n in range(len(d)):
        if sig[n] and not end[n]:
            for m in (n - 1, n + 1):
                if 0 <= m < len(d) and sig[m] and d[m] * d[n] < 0:
                    eff[n] = True
    for n in range(len(d)):
        if sig[n] and end[n]:
            for m in (n - 1, n + 1):
                if 0 <= m < len(d) and not end[m] and eff[m]:
                    eff[n] = True
    total = sum(ext[n + 1][0] - ext[n][0] for n in range(len(d)) if eff[n])
    return min(1.0, total / L)


L = 200
sine = [math.sin(2 * math.pi * 4 * (i + 0.5) / L) for i in range(L)]
square = [1.0 if ((i + 0.5) * 4 / L) % 1 < 0.5 else -1.0 for i in range(L)]
bump = [math.exp(-((i - 100) / 20) ** 2) for i in range(L)]
print(f"waviness sine4   = {waviness(sine):.12f}")
print(f"waviness square4 = {waviness(square):.12f}")
print(f"waviness bump    = {waviness(bump):.12f}")
print(f"waviness ramp    = {waviness([i / 99 for i in range(100)]):.12f}")

"""Reproduce the arithmetic that can be checked from published summary tables.

Bias-bin counts give the chi-square homogeneity statistic; precision and
recall pairs give F1, both directly and allowing for two-decimal rounding.
"""

import math

from rainkit.scoring import BIAS_LABELS, chi2_homogeneity, f1_score
from rainkit.special import log_gammaincc

NWP = [43237, 9546, 24404, 32850, 39088, 76155]
UNET18 = [47820, 18540, 17525, 79252, 19671, 42472]

PRF1 = {
    ("CLIM", 0.5): (0.45, 0.97, 0.61), ("CLIM", 10): (0.17, 0.02, 0.04),
    ("NWP", 0.5): (0.49, 0.88, 0.62), ("NWP", 10): (0.17, 0.08, 0.11),
    ("UNET18", 0.5): (0.60, 0.61, 0.61), ("UNET18", 10): (0.28, 0.21, 0.24),
    ("UNET12", 0.5): (0.62, 0.64, 0.63), ("UNET12", 10): (0.31, 0.26, 0.28),
    ("HYB", 0.5): (0.51, 0.90, 0.65), ("HYB", 10): (0.24, 0.12, 0.16),
}


def main() -> None:
    print("bias bins:", ", ".join(BIAS_LABELS))
    stat, p = chi2_homogeneity(UNET18, NWP)
    log10_p = log_gammaincc(2.5, stat / 2) / math.log(10)
    print(f"chi-square UNET18 vs NWP: S={stat:.2f} p={p:.3g}, log10 p={log10_p:.1f} (dof 5)\n")
    print(f"{'model':8s} {'tau':>4s} {'P':>5s} {'R':>5s} {'F1':>5s} {'2PR/(P+R)':>10s} {'rounding range':>16s}")
    for (model, tau), (p_, r_, f1) in PRF1.items():
        lo, hi = f1_score(p_ - 0.005, r_ - 0.005), f1_score(p_ + 0.005, r_ + 0.005)
        flag = "" if abs(f1_score(p_, r_) - f1) <= 0.005 else "  <- off by more than 0.005"
        print(f"{model:8s} {tau:4g} {p_:5.2f} {r_:5.2f} {f1:5.2f} {f1_score(p_, r_):10.4f}   [{lo:.4f}, {hi:.4f}]{flag}")


if __name__ == "__main__":
    main()

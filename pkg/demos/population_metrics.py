"""
Comparing image populations with the metric suite
=================================================

Builds three small populations from the same scheme: a "real" stand-in,
an imitation rendered with different seeds, and a synthetic set that
clones the real one. The grouped report then shows the synthetic
population tracking the real one more closely than the imitation does.
"""

from captchakit.metrics import compare_populations, group_protocol_report
from captchakit.render import derive_seed, render_captcha
from captchakit.schemes import preset

SCHEME = preset(12)  # every mechanism on, the hardest-looking images
GROUPS = 5           # group g compares the first 2g samples, so 10 per side


def rendered(master_seed, count):
    return [render_captcha(SCHEME, derive_seed(master_seed, i)).image
            for i in range(count)]


real = rendered(101, 2 * GROUPS)
imitation = rendered(202, 2 * GROUPS)
synthetic = [img.copy() for img in real]  # a perfect synthesizer, for the demo

report = group_protocol_report(real, imitation, synthetic, groups=GROUPS)

print("per-group SSIM against the real population:")
imit = report.series("ssim", "imitation")
synt = report.series("ssim", "synthetic")
for g, (a, b) in enumerate(zip(imit, synt), start=1):
    print(f"  group {g}: imitation={a:.4f}  synthetic={b:.4f}")

wins = compare_populations(report)
print("\ngroups where synthetic tracked real better than imitation:")
for metric, won in sorted(wins.items()):
    print(f"  {metric:5s} {won}/{GROUPS}")

"""Verify the hand-derived backpropagation-through-time gradients.

The recurrent network is trained with manually coded gradients rather than an
autodiff framework, so this script compares every parameter tensor against
central finite differences on a small random instance.
"""

import rfanet as rf

for peephole in ("full", "diagonal"):
    report = rf.grad_check(
        input_dim=6, hidden_dim=4, num_classes=3, subseq_len=5,
        seed=0, peephole=peephole,
    )
    print(f"peephole={peephole}  dims={report.dims}")
    for name, err in report.per_tensor.items():
        print(f"  {name:>4s}: worst relative error {err:.3e}")
    verdict = "OK" if report.passed else "MISMATCH"
    print(f"  -> {verdict} (max {report.max_rel_error:.3e}, "
          f"threshold {report.threshold:.0e})\n")

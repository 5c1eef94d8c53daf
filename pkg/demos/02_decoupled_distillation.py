"""
Decoupled distillation and its temperature schedule
===================================================

The loss splits into a target-vs-rest part and a part over the non-target
classes only.  The temperature starts at 2*beta + 1 and decays to 1.
"""
import numpy as np

from hetfl.distill import DkdParams, dkd_loss, split_distribution, temperature

params = DkdParams(alpha=0.5, beta=5.0, t_max=10)
print("epoch  temperature")
for epoch in range(1, params.t_max + 1):
    print(f"{epoch:5d}  {temperature(epoch, params):.3f}")

student = np.array([[2.0, 0.5, -1.0, 0.0]])
teacher = np.array([[1.0, 1.5, -0.5, 0.2]])
label = [0]

d = split_distribution(teacher[0], label[0], 3.0)
print("\nteacher target pair", np.round(d.target_pair, 4))
print("teacher non-target @T=3", np.round(d.nontarget, 4))

# a hot temperature flattens the non-target comparison
for t in (1.0, 3.0, 11.0):
    print(f"T={t:4.1f}  dkd={dkd_loss(student, teacher, label, params, t):.5f}")
print("identical logits:", dkd_loss(student, student, label, params, 3.0))

"""The numeric core: tape-based reverse-mode differentiation, gradient
verification against finite differences, and a few Adam steps on a toy
regression.
"""

import numpy as np

from bridgeqa.numcore import (
    ParamStore,
    Tensor,
    adam_step,
    add,
    backward,
    constant,
    grad_check,
    matmul,
    mul,
    sigmoid,
    sum_all,
    tanh,
)


def main():
    rng = np.random.default_rng(0)

    # 1. a tiny computation and its exact gradients
    x = Tensor([[1.0, 2.0], [3.0, 4.0]])
    w = Tensor([[0.5], [-0.25]])
    loss = sum_all(tanh(matmul(x, w)))
    backward(loss)
    print("loss:", float(loss.data))
    print("d loss / d w:\n", w.grad)

    # 2. every gradient is checked against central finite differences
    store = ParamStore()
    store.add("W", rng.normal(size=(4, 3)))
    store.add("b", np.zeros(3))
    inputs = rng.normal(size=(6, 4))

    def build(s):
        return sum_all(sigmoid(add(matmul(constant(inputs), s["W"]), s["b"])))

    report = grad_check(build, store, eps=1e-5, tol=1e-4)
    print("\n" + report.summary())
    for name, err in report.max_rel_err.items():
        print(f"  {name:<3} max rel err {err:.2e}")

    # 3. Adam drives a realizable least-squares problem to zero
    data = rng.normal(size=(5, 3))
    target = data @ rng.normal(size=(3, 2))
    fit = ParamStore()
    fit.add("W", np.zeros((3, 2)))
    for step in range(200):
        pred = matmul(constant(data), fit["W"])
        diff = add(pred, constant(-target))
        loss = sum_all(mul(diff, diff))
        backward(loss)
        adam_step(fit, fit.gradients(), lr=0.05)
        fit.zero_grad()
        if step % 50 == 0 or step == 199:
            print(f"step {step:>3}: squared error {float(loss.data):.6f}")


if __name__ == "__main__":
    main()

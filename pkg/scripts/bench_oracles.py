"""Reference expectations of every built-in problem, next to the reported values."""

import warnings

from bode.problems import builtin_names, get_problem, true_qoi_oracle


def main():
    for name in builtin_names():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = get_problem(name)
        res = true_qoi_oracle(p)
        print(f"{name:>9}: {res.value:.10g} (+- {res.error:.2g}, {res.method}); "
              f"reported {p.reference_qoi} [{p.reference_provenance}]")


if __name__ == "__main__":
    main()

import numpy as np

from torentropy.toric import (
    asymptotic_entropy,
    balanced_check,
    bergman_measure,
    build_table,
    builtin_pair,
    convolution_power_check,
    entropy,
    entropy_error_curve,
    max_entropy_point,
)
from torentropy.toric.bergman import tampered_pair


def basic_example():
    pair = builtin_pair('fs-cp1')
    tables = {k: build_table(pair, k) for k in (16, 64, 256, 1024)}
    for row in entropy_error_curve(pair, tables, 0.5):
        print(row.model_dump_json())

    measure = bergman_measure(pair, tables[16], 0.3)
    print('H =', entropy(measure), 'asymptotic', asymptotic_entropy(pair, 0.3, 16))

    ladder = [build_table(pair, k) for k in range(1, 7)]
    print(balanced_check(pair, ladder).model_dump_json(indent=2))

    tampered = tampered_pair()
    ladder = [build_table(tampered, k) for k in range(1, 7)]
    print(convolution_power_check(tampered, ladder).model_dump_json(indent=2))

    fs2 = builtin_pair('fs-cp2')
    point = max_entropy_point(fs2)
    print('x* =', np.round(point.x, 8), 'unique' if point.unique else 'not unique')


if __name__ == '__main__':
    basic_example()

"""Time the three operator families on batches of synthetic meshes.

A scaled-down run of the benchmark protocol (the CLI default is 50
batches of 50 meshes at 500 faces: `meshlearn bench`). Each mesh goes
through descriptor, convolution and pooling forward+backward; per-phase
wall times are averaged over batches.
"""

from meshlearn.bench import run_benchmark

report = run_benchmark(faces=300, batch_size=5, num_batches=5, seed=0)
for line in report.lines():
    print(line)

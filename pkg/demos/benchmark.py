"""Time the key-level operations and show they ignore the content size."""
from icnshare.overhead import bench_crypto, format_bench

for size in (1024, 10 * 1024 * 1024):
    print(f"\nitem body of {size} bytes")
    print(format_bench(bench_crypto(trials=20, item_size=size)))

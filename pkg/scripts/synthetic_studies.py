"""Run the three synthetic studies and write their outputs under results/synthetic."""

import argparse
import subprocess
import sys


def run(*args):
    print("+ sslab", " ".join(args), flush=True)
    subprocess.run([sys.executable, "-m", "sslab.cli", *args], check=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/synthetic")
    ap.add_argument("--seeds", default="5")
    args = ap.parse_args()
    run("demo-naive", "--seeds", args.seeds, "--out", f"{args.out}/naive")
    run("demo-ordering", "--seeds", args.seeds, "--out", f"{args.out}/ordering")
    run("curves", "--dataset", "gaussian", "--method", "naive", "--cost", "0.8", "--out", f"{args.out}/curves")


if __name__ == "__main__":
    main()

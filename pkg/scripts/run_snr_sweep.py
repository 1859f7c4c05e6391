"""RMSE of both estimators versus SNR (K=3 triplet, P=L=8)."""
from _common import run

if __name__ == "__main__":
    run(__doc__, sweep="snr", reduction=8, branches=8, sources=3)

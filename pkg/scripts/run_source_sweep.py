"""RMSE versus number of sources K=1..5 at 20 dB (P=L=8)."""
from _common import run

if __name__ == "__main__":
    run(__doc__, sweep="sources", reduction=8, branches=8, snr_db=(20.0,), trials=100)

"""RMSE versus number of sampling branches P at 20 dB (L=8, random patterns)."""
from _common import run

if __name__ == "__main__":
    run(__doc__, sweep="branches", reduction=8, sources=3, snr_db=(20.0,), pattern="random")

"""Streaming decoding policies and latency simulation.

CIF alignment, MoChA/MFLA attention masks, wait-k and Local Agreement
decoding over a toy encoder-decoder, and DAL/FLOPs accounting.
"""
from .kernels import BACKEND
from .numeric import ContractError, Matrix

__version__ = "0.1.0"

__all__ = ["BACKEND", "ContractError", "Matrix", "__version__"]

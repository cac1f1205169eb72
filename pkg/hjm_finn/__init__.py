# -*- coding: utf-8 -*-

from hjm_finn.mc_engine import MonteCarloPricer
from hjm_finn.pricing_api import FinnPricer

__all__ = [
    MonteCarloPricer,
    FinnPricer,
]


__author__ = """HJM FINN"""
__email__ = 'hjm-finn@example.org'
__version__ = '0.1.0'

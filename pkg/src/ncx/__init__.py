"""Noncontextuality-test analysis: simulate, fit to a GPT, build secondary
procedures, and evaluate the correlation quantity A against its 5/6 bound."""

__version__ = "0.1.0"

PREP_IDS = ("P1,0", "P1,1", "P2,0", "P2,1", "P3,0", "P3,1", "P4,0", "P4,1")
MEAS_IDS = ("M1", "M2", "M3", "M4")

"""
Selling strategies shared by the discrete and continuous solvers
"""

from enum import Enum


class Strategy(Enum):
    """Seller regimes; also used as region labels on value curves"""
    SA = "SA"  # safe arm only, no learning
    PC = "PC"  # partial coverage: safe by default, risky for reporters
    IR = "IR"  # immediate revelation: bonus at the cost cap
    FC = "FC"  # full coverage: risky for all, bonus for reporters
    NB = "NB"  # risky arm, no bonus

    @property
    def learns(self) -> bool:
        return self in (Strategy.PC, Strategy.IR, Strategy.FC)


# Deterministic tie-breaking order for equal-profit strategies (reporting-favoring)
TIE_ORDER = (Strategy.FC, Strategy.PC, Strategy.NB, Strategy.SA, Strategy.IR)

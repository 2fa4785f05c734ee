"""Desikan-Killiany 84-node short names, indexed by parcellation key."""

DK_SHORT_NAMES = (
    "L.BSTS", "L.CACG", "L.CMFG", "L.CU", "L.EC", "L.FG", "L.IPG",
    "L.ITG", "L.ICG", "L.LOG", "L.LOFG", "L.LG", "L.MOFG", "L.MTG",
    "L.PHIG", "L.PaCG", "L.POP", "L.POR", "L.PTR", "L.PCAL", "L.PoCG",
    "L.PCG", "L.PrCG", "L.PCU", "L.RACG", "L.RMFG", "L.SFG", "L.SPG",
    "L.STG", "L.SMG", "L.FP", "L.TP", "L.TTG", "L.IN", "L.CER",
    "L.TH", "L.CA", "L.PU", "L.PA", "L.HI", "L.AM", "L.AC",
    "R.TH", "R.CA", "R.PU", "R.PA", "R.HI", "R.AM", "R.AC",
    "R.BSTS", "R.CACG", "R.CMFG", "R.CU", "R.EC", "R.FG", "R.IPG",
    "R.ITG", "R.ICG", "R.LOG", "R.LOFG", "R.LG", "R.MOFG", "R.MTG",
    "R.PHIG", "R.PaCG", "R.POP", "R.POR", "R.PTR", "R.PCAL", "R.PoCG",
    "R.PCG", "R.PrCG", "R.PCU", "R.RACG", "R.RMFG", "R.SFG", "R.SPG",
    "R.STG", "R.SMG", "R.FP", "R.TP", "R.TTG", "R.IN", "R.CER",
)

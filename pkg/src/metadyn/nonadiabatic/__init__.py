"""Models where the bias is not a function of an autonomous reaction coordinate."""

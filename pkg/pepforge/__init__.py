# pepforge: pocket-aware peptide generation with twin conditional diffusion models
#
# Structure is generated as E(3)-invariant backbone internal coordinates (4 dihedrals and
# 4 bond angles per residue) by a wrapped-Gaussian diffusion model conditioned on the receptor
# pocket; the sequence is then generated by a BLOSUM-seeded discrete diffusion model conditioned
# on that structure and the same pocket.
#
# License: MIT

import logging

__version__ = "0.1.0"

# Package logger; submodules log through logging.getLogger(__name__)
logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

handler = logging.StreamHandler()
handler.setLevel(logging.DEBUG)
formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
handler.setFormatter(formatter)
logger.addHandler(handler)

# matplotlib is chatty at INFO when it builds its font cache
logging.getLogger("matplotlib").setLevel(logging.WARNING)


def set_verbosity(verbose: bool = False, quiet: bool = False) -> None:
    """Adjust the package log level for command-line use."""
    if verbose:
        logger.setLevel(logging.DEBUG)
    elif quiet:
        logger.setLevel(logging.WARNING)
    else:
        logger.setLevel(logging.INFO)


__all__ = ["__version__", "logger", "set_verbosity"]

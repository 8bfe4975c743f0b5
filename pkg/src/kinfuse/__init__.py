"""Knowledge infusion from multi-channel (rich) classifiers into
few-channel (poor) classifiers, with a verifiable agreement theory and a
desk-scale experiment harness."""

__version__ = "0.1.0"

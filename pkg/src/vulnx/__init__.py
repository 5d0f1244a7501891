"""Scanner report -> unified vulnerability dataset, with ROUGE-L evaluation."""

__version__ = "0.1.0"

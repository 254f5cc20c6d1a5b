"""Camera-frame rotary encodings and stereo-decomposed attention in numpy."""
__version__ = "0.1.0"

from qwork_pipeline._version import __version__

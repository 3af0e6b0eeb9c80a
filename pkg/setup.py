from setuptools import setup, find_packages

VERSION = '0.1.0'
DESCRIPTION = 'Prompt-free region proposals: a small detector with a Sparse Image-Aware Adapter, a Cascade Self-Prompt and Centerness-Guided Query Selection.'
LONG_DESCRIPTION = """\
Freeprop is a numpy implementation of a class-agnostic region proposal network.
A Sparse Image-Aware Adapter (SIA) fits a learnable embedding to each image by
attending over its feature pyramid. A Cascade Self-Prompt (CSP) refines it coarse to
fine on the regions that look like objects. Centerness-Guided Query Selection (CG-QS)
feeds a small transformer decoder. Training uses Hungarian matching
with a centerness loss. Synthetic scenes, checkpoints, evaluation by average recall
and ablation sweeps are included.
"""

setup(
    name="freeprop",
    version=VERSION,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    packages=find_packages(include=['freeprop', 'freeprop.*']),
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": ["freeprop=freeprop.cli:main"],
    },
    keywords=['python', 'region proposal', 'object detection', 'numpy'],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    python_requires='>=3.9',
)

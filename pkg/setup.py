import codecs
import os
import sys

from setuptools import find_packages, setup

here = os.path.abspath(os.path.dirname(__file__))

__version__ = None
exec(open(f"{here}/interference_lab/version.py").read())

long_description = ""
with codecs.open(os.path.join(here, "README.md"), encoding="utf-8") as readme:
    long_description = readme.read()

validate_dependencies = [
    "pytest>=6,<8",
    "flake8>=3,<7",
]

needs_pytest = {"pytest", "test", "ptr"}.intersection(sys.argv)
pytest_runner = ["pytest-runner"] if needs_pytest else []

setup(
    name='interference-lab',
    version=__version__,
    description='Design and analysis of randomized experiments under network interference.',
    long_description=long_description,
    long_description_content_type="text/markdown",
    python_requires=">=3.8.0",
    include_package_data=True,
    license="The Unlicense",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: Public Domain",
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        "Topic :: Scientific/Engineering :: Mathematics",
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
    keywords=["causal inference", "interference", "randomized experiments", "horvitz-thompson",
              "network experiments", "simulation"],
    packages=find_packages(
        exclude=[
            "tests",
            "tests.*",
        ]
    ),
    install_requires=["numpy>=1.20", "scipy>=1.7", "networkx>=2.6", "pandas>=1.3", "pyyaml>=5.4"],
    extras_require={"plot": ["matplotlib>=3.4"]},
    entry_points={"console_scripts": ["interference-lab=interference_lab.cli:main"]},
    setup_requires=pytest_runner,
    test_suite="tests",
    tests_require=validate_dependencies,
)

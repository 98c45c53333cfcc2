from setuptools import setup

NAME = "interacting-urns"
VERSION = "0.1.0"

INSTALL_REQUIRES = [
    "numpy >=1.22",
    "scipy >=1.8",
    "networkx >=2.8",
    "joblib >=1.1",
    "wrapt >=1.14.1, <2.0.0",
    "python-dotenv >=0.15.0",
]

setup(
    name=NAME,
    version=VERSION,
    description="Interacting reinforced urn processes on weighted digraphs",
    long_description="Structure analysis, limit prediction and seeded Monte "
    "Carlo verification of interacting reinforced stochastic processes",
    license="MIT",
    packages=["interacting_urns"],
    install_requires=INSTALL_REQUIRES,
    entry_points={
        "console_scripts": ["interacting-urns = interacting_urns.cli:main"]
    },
)

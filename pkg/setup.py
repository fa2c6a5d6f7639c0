from setuptools import setup, find_packages

setup(
    name="ecla_learner",
    version="0.1.0",
    description="Continual concept learning with generative replay and sliced-Wasserstein embedding alignment",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    python_requires=">=3.8",
    install_requires=["numpy>=1.22", "scipy>=1.8", "boto3", "botocore"],
    entry_points={
        "console_scripts": [
            "ecla_learner=ecla_learner.__main__:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    keywords="continual-learning few-shot generative-replay wasserstein gmm",
)

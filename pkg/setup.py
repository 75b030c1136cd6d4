import setuptools


with open("README.md", "r", encoding="utf-8") as f:
    long_desc = f.read()

setuptools.setup(
    name="medsamca",
    version="0.1.0",
    python_requires='>=3.8.0',
    description="Desk-scale CNN/ViT hybrid for box-prompted medical image segmentation",
    long_description=long_desc,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(
        exclude=["tests", "*.tests", "*.tests.*", "tests.*",
                 "docs", "examples", "examples.*", ".gitignore", "README.md"],
    ),
    test_suite="tests",
    install_requires=[
        "numpy",
        "scipy",
        "Pillow"
    ],
    entry_points={
        "console_scripts": ["medsamca=medsamca.harness.cli:main"],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
)

from src.cli import app

def main():
    app(prog_name="constitutive-toolkit")

if __name__ == "__main__":
    main()

export const CATEGORIES = ["Male", "Female", "LowQuality", "Others"];
export const LOWQ_REASONS = [
    "MultiplePeople",
    "NoPerson",
    "NoFace",
    "Blurred",
];

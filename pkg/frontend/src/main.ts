import { ConsoleApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new ConsoleApp(root);
  void app.start();
}

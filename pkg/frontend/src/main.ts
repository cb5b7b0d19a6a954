import { Client } from "./api.js";
import { startOperatorView, startWorkerView } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("server") ?? "http://127.0.0.1:8080";
const client = new Client(baseUrl);

document.getElementById("server-url")!.textContent = baseUrl;

for (const tab of Array.from(document.querySelectorAll<HTMLButtonElement>(".tab"))) {
    tab.addEventListener("click", () => {
        for (const other of Array.from(document.querySelectorAll(".tab"))) other.classList.remove("active");
        tab.classList.add("active");
        document.getElementById("worker-view")!.style.display = tab.dataset.view === "worker" ? "" : "none";
        document.getElementById("operator-view")!.style.display = tab.dataset.view === "operator" ? "" : "none";
    });
}

startWorkerView(client);
startOperatorView(client);

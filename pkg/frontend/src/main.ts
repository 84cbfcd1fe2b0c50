// Entry point for the static page. The API origin defaults to the page's
// own origin (the service can mount these assets); override with
// ?api=http://host:port when the files are served elsewhere.

import { ConsultApp } from './app.js';

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('api');
  if (fromQuery) return fromQuery;
  const injected = (window as { LEXDIAG_API?: string }).LEXDIAG_API;
  return injected ?? '';
}

const root = document.getElementById('app');
if (root) {
  const app = new ConsultApp(root, { baseUrl: apiBase() });
  void app.start();
}
